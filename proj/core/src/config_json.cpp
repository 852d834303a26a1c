#include "ripple/config_json.hpp"

#include "ripple/error.hpp"

namespace ripple {

using nlohmann::json;

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

void to_json(json& j, const AdamConfig& c) {
    j = json{{"lr", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.epsilon}};
}

void from_json(const json& j, AdamConfig& c) {
    read_opt(j, "lr", c.learning_rate);
    read_opt(j, "beta1", c.beta1);
    read_opt(j, "beta2", c.beta2);
    read_opt(j, "eps", c.epsilon);
}

void to_json(json& j, const LmConfig& c) {
    j = json{{"context", c.context},
             {"embed_dim", c.embed_dim},
             {"hidden_dim", c.hidden_dim},
             {"vocab_cap", c.vocab_cap},
             {"adam", c.adam},
             {"seed", c.seed},
             {"max_epochs", c.max_epochs},
             {"early_stop_loss", c.early_stop_loss},
             {"batch_size", c.batch_size}};
}

void from_json(const json& j, LmConfig& c) {
    read_opt(j, "context", c.context);
    read_opt(j, "embed_dim", c.embed_dim);
    read_opt(j, "hidden_dim", c.hidden_dim);
    read_opt(j, "vocab_cap", c.vocab_cap);
    read_opt(j, "adam", c.adam);
    read_opt(j, "seed", c.seed);
    read_opt(j, "max_epochs", c.max_epochs);
    read_opt(j, "early_stop_loss", c.early_stop_loss);
    read_opt(j, "batch_size", c.batch_size);
}

void to_json(json& j, const ParamMask& m) {
    j = json::array();
    if (m.embedding) j.push_back("embedding");
    if (m.hidden) j.push_back("hidden");
    if (m.output) j.push_back("output");
}

void from_json(const json& j, ParamMask& m) {
    m = {false, false, false};
    for (const auto& g : j) {
        const auto name = g.get<std::string>();
        if (name == "embedding") m.embedding = true;
        else if (name == "hidden") m.hidden = true;
        else if (name == "output") m.output = true;
        else throw ConfigError("unknown parameter group '" + name + "'");
    }
}

void to_json(json& j, const EditEngineConfig& c) {
    j = json{{"method", std::string(to_string(c.method))},
             {"lr", c.learning_rate},
             {"early_stop_loss", c.early_stop_loss},
             {"max_steps", c.max_steps},
             {"epsilon", c.epsilon},
             {"mask", c.mask},
             {"seed", c.seed},
             {"template_index", c.template_index}};
}

void from_json(const json& j, EditEngineConfig& c) {
    if (auto it = j.find("method"); it != j.end()) c.method = parse_edit_method(it->get<std::string>());
    read_opt(j, "lr", c.learning_rate);
    read_opt(j, "early_stop_loss", c.early_stop_loss);
    read_opt(j, "max_steps", c.max_steps);
    read_opt(j, "epsilon", c.epsilon);
    read_opt(j, "mask", c.mask);
    read_opt(j, "seed", c.seed);
    read_opt(j, "template_index", c.template_index);
}

void to_json(json& j, const GieConfig& c) {
    j = json{{"tau", c.tau}};
    j["max_selected"] = c.max_selected ? json(*c.max_selected) : json(nullptr);
}

void from_json(const json& j, GieConfig& c) {
    read_opt(j, "tau", c.tau);
    if (auto it = j.find("max_selected"); it != j.end()) {
        if (it->is_null()) c.max_selected.reset();
        else c.max_selected = it->get<std::size_t>();
    }
}

void to_json(json& j, const SirConfig& c) {
    j = json{{"k", c.k},
             {"pool", std::string(to_string(c.pool))},
             {"gie", c.gie},
             {"revision", c.revision},
             {"ranking_metric", std::string(to_string(c.ranking_metric))}};
}

void from_json(const json& j, SirConfig& c) {
    read_opt(j, "k", c.k);
    if (auto it = j.find("pool"); it != j.end()) c.pool = parse_candidate_pool(it->get<std::string>());
    read_opt(j, "gie", c.gie);
    read_opt(j, "revision", c.revision);
    if (auto it = j.find("ranking_metric"); it != j.end()) {
        c.ranking_metric = parse_metric_kind(it->get<std::string>());
    }
}

}  // namespace ripple
