#include "ripple/templates.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "ripple/error.hpp"

namespace ripple {

namespace {

constexpr std::string_view kPlaceholder = "{s}";

std::string humanize(std::string_view relation) {
    std::string out(relation);
    for (char& c : out) {
        if (c == '_') c = ' ';
    }
    return out;
}

std::string substitute(std::string_view tmpl, std::string_view subject) {
    std::string out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = tmpl.find(kPlaceholder, start);
        if (pos == std::string_view::npos) {
            out.append(tmpl.substr(start));
            break;
        }
        out.append(tmpl.substr(start, pos - start));
        out.append(subject);
        start = pos + kPlaceholder.size();
    }
    // A trailing space in a template would double up with the object separator.
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

}  // namespace

std::vector<std::string> fallback_templates(std::string_view relation) {
    const std::string r = humanize(relation);
    return {
        "The " + r + " of {s} is",
        "{s} is connected through " + r + " to",
        "In terms of " + r + ", {s} relates to",
    };
}

TemplateTable TemplateTable::builtin() {
    TemplateTable t(true);
    t.set("architectural style", {"{s} is designed in the architectural style of",
                                  "The {s} showcases the distinctive architectural style of",
                                  "When discussing the architectural style of the {s}, one immediately thinks of"});
    t.set("country", {"{s} is located in the country of", "{s} can be found in", "The country of {s} is"});
    t.set("capital", {"The capital of {s} is", "{s} has its capital in", "The seat of government of {s} is"});
    t.set("occupation", {"{s} works as a", "By profession, {s} is a", "The occupation of {s} is"});
    t.set("place of birth", {"{s} was born in", "The birthplace of {s} is", "{s} came into the world in"});
    t.set("instance of", {"{s} is an instance of", "{s} is a kind of", "{s} can be classified as"});
    t.set("located in the administrative territorial entity",
          {"{s} is located in", "{s} lies within the administrative territory of",
           "Administratively, {s} belongs to"});
    t.set("genre", {"The genre of {s} is", "{s} belongs to the genre of", "{s} is best described as"});
    t.set("official language", {"The official language of {s} is", "In {s}, the official language is",
                                "{s} has as its official language"});
    t.set("member of sports team", {"{s} plays for", "{s} is a member of the team", "{s} has represented"});
    return t;
}

void TemplateTable::set(std::string relation, std::vector<std::string> templates) {
    if (templates.size() < kMinTemplates) {
        throw ConfigError("relation '" + relation + "' needs at least " + std::to_string(kMinTemplates) +
                          " templates");
    }
    for (const auto& tmpl : templates) {
        if (tmpl.find(kPlaceholder) == std::string::npos) {
            throw ConfigError("template for '" + relation + "' lacks the {s} placeholder: " + tmpl);
        }
    }
    entries_[std::move(relation)] = std::move(templates);
}

bool TemplateTable::has(std::string_view relation) const {
    return entries_.find(relation) != entries_.end();
}

std::size_t TemplateTable::count(std::string_view relation) const {
    if (auto it = entries_.find(relation); it != entries_.end()) return it->second.size();
    return allow_fallback_ ? fallback_templates(relation).size() : 0;
}

std::string TemplateTable::get(std::string_view relation, std::size_t index) const {
    if (auto it = entries_.find(relation); it != entries_.end()) {
        if (index >= it->second.size()) {
            throw ConfigError("template index " + std::to_string(index) + " out of range for '" +
                              std::string(relation) + "'");
        }
        return it->second[index];
    }
    if (!allow_fallback_) {
        throw ConfigError("missing template for relation '" + std::string(relation) + "' and fallback is disabled");
    }
    auto fb = fallback_templates(relation);
    if (index >= fb.size()) {
        throw ConfigError("template index " + std::to_string(index) + " out of range for '" +
                          std::string(relation) + "'");
    }
    return fb[index];
}

TemplateTable TemplateTable::from_json(const nlohmann::json& j, bool allow_fallback) {
    if (!j.is_object()) throw ConfigError("template table must be a JSON object");
    TemplateTable t(allow_fallback);
    for (const auto& [relation, list] : j.items()) {
        if (!list.is_array()) throw ConfigError("templates for '" + relation + "' must be an array");
        std::vector<std::string> templates;
        for (const auto& s : list) {
            if (!s.is_string()) throw ConfigError("templates for '" + relation + "' must be strings");
            templates.push_back(s.get<std::string>());
        }
        t.set(relation, std::move(templates));
    }
    return t;
}

nlohmann::json TemplateTable::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [relation, list] : entries_) j[relation] = list;
    return j;
}

TemplateTable TemplateTable::load(const std::filesystem::path& path, bool allow_fallback) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open template table " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, allow_fallback);
}

PromptedFact render_prompt(const KnowledgeGraph& kg, const TemplateTable& templates, const Triplet& triplet,
                           std::size_t template_index) {
    const auto tmpl = templates.get(kg.relation_name(triplet.relation), template_index);
    PromptedFact f;
    f.triplet = triplet.id;
    f.prefix = substitute(tmpl, kg.entity_name(triplet.subject));
    f.sentence = f.prefix + " " + kg.entity_name(triplet.object);
    return f;
}

PromptedFact render_counterfactual(const KnowledgeGraph& kg, const TemplateTable& templates,
                                   const EditRequest& edit, std::size_t template_index) {
    PromptedFact f = render_prompt(kg, templates, edit.original, template_index);
    f.sentence = f.prefix + " " + kg.entity_name(edit.new_object);
    return f;
}

std::vector<PromptedFact> render_all(const KnowledgeGraph& kg, const TemplateTable& templates,
                                     std::size_t template_index) {
    std::vector<PromptedFact> out;
    out.reserve(kg.triplet_count());
    for (const auto& t : kg.triplets()) out.push_back(render_prompt(kg, templates, t, template_index));
    return out;
}

void check_template_coverage(const KnowledgeGraph& kg, const TemplateTable& templates) {
    for (std::size_t r = 0; r < kg.relation_count(); ++r) {
        const auto& name = kg.relation_name(from_index<RelationId>(r));
        if (templates.count(name) < TemplateTable::kMinTemplates) {
            throw ConfigError("missing template for relation '" + name + "' and fallback is disabled");
        }
    }
}

}  // namespace ripple
