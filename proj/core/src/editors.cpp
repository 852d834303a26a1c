#include "ripple/editors.hpp"

#include <cmath>

#include "ripple/error.hpp"

namespace ripple {

std::string_view to_string(EditMethod m) {
    return m == EditMethod::FT ? "FT" : "FT_L";
}

EditMethod parse_edit_method(std::string_view s) {
    if (s == "FT" || s == "ft") return EditMethod::FT;
    if (s == "FT_L" || s == "ft_l" || s == "FT+L") return EditMethod::FT_L;
    throw ConfigError("unknown edit method '" + std::string(s) + "'");
}

void EditEngineConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("editor learning rate must be >= 0");
    if (!(early_stop_loss > 0.0)) throw ConfigError("editor early-stop threshold must be > 0");
    if (method == EditMethod::FT_L && !(epsilon > 0.0)) throw ConfigError("FT_L requires epsilon > 0");
    if (!mask.embedding && !mask.hidden && !mask.output) throw ConfigError("editor mask selects no parameters");
}

FineTuneEngine::FineTuneEngine(EditEngineConfig config) : config_(config) { config_.validate(); }

std::string_view FineTuneEngine::name() const { return to_string(config_.method); }

namespace {

void clamp_block(double* theta, const double* anchor, Eigen::Index n, double eps) {
    for (Eigen::Index i = 0; i < n; ++i) {
        // anchor +- eps can round outward; step back until the measured
        // distance is within the radius.
        double lo = anchor[i] - eps;
        while (anchor[i] - lo > eps) lo = std::nextafter(lo, anchor[i]);
        double hi = anchor[i] + eps;
        while (hi - anchor[i] > eps) hi = std::nextafter(hi, anchor[i]);
        if (theta[i] < lo) theta[i] = lo;
        if (theta[i] > hi) theta[i] = hi;
    }
}

void clamp_to_box(LmParams& p, const LmParams& anchor, const ParamMask& mask, double eps) {
    if (mask.embedding) clamp_block(p.embedding.data(), anchor.embedding.data(), p.embedding.size(), eps);
    if (mask.hidden) {
        clamp_block(p.hidden_w.data(), anchor.hidden_w.data(), p.hidden_w.size(), eps);
        clamp_block(p.hidden_b.data(), anchor.hidden_b.data(), p.hidden_b.size(), eps);
    }
    if (mask.output) {
        clamp_block(p.output_w.data(), anchor.output_w.data(), p.output_w.size(), eps);
        clamp_block(p.output_b.data(), anchor.output_b.data(), p.output_b.size(), eps);
    }
}

}  // namespace

EditOutcome FineTuneEngine::apply(const ModelSnapshot& pre, std::span<const FactExample> facts, std::string tag) const {
    if (facts.empty()) throw ConfigError("edit batch is empty");

    std::vector<Sequence> batch;
    batch.reserve(facts.size());
    for (const auto& f : facts) {
        auto seq = make_conditional_sequence(pre.vocab(), f.prefix, f.sentence);
        if (seq.tokens.size() < 2 || seq.target_count() == 0) {
            throw ConfigError("edit sentence has nothing to learn after its prefix: " + f.sentence);
        }
        batch.push_back(std::move(seq));
    }

    const LmParams& anchor = pre.params();
    LmParams params = anchor;
    AdamConfig adam_cfg;
    adam_cfg.learning_rate = config_.learning_rate;
    AdamOptimizer adam(params, adam_cfg, config_.mask);

    EditOutcome out{pre, {}, 0.0, 0, false};
    for (std::size_t step = 0;; ++step) {
        auto lg = batch_loss_and_grad(params, batch, config_.mask);
        if (!std::isfinite(lg.loss)) throw Error("edit loss became non-finite at step " + std::to_string(step));
        out.final_mean_loss = lg.loss;
        if (lg.loss <= config_.early_stop_loss) {
            out.success = true;
            break;
        }
        if (step >= config_.max_steps) break;
        adam.step(params, lg.grad);
        if (config_.method == EditMethod::FT_L) clamp_to_box(params, anchor, config_.mask, config_.epsilon);
        out.steps = step + 1;
    }

    out.final_losses = batch_losses(params, batch);
    out.post = pre.with_params(std::move(params), std::move(tag));
    return out;
}

std::unique_ptr<EditEngine> make_engine(const EditEngineConfig& config) {
    return std::make_unique<FineTuneEngine>(config);
}

std::vector<FactExample> counterfactual_examples(const KnowledgeGraph& kg, const TemplateTable& templates,
                                                 std::span<const EditRequest> edits, std::size_t template_index) {
    std::vector<FactExample> out;
    out.reserve(edits.size());
    for (const auto& e : edits) {
        if (e.new_object == e.original.object) throw ConfigError("edit request keeps the original object");
        auto f = render_counterfactual(kg, templates, e, template_index);
        out.push_back({std::move(f.prefix), std::move(f.sentence)});
    }
    return out;
}

std::vector<FactExample> original_examples(const KnowledgeGraph& kg, const TemplateTable& templates,
                                           std::span<const TripletId> ids, std::size_t template_index) {
    std::vector<FactExample> out;
    out.reserve(ids.size());
    for (TripletId id : ids) {
        auto f = render_prompt(kg, templates, kg.triplet(id), template_index);
        out.push_back({std::move(f.prefix), std::move(f.sentence)});
    }
    return out;
}

EditOutcome apply_edits(const ModelSnapshot& pre, const KnowledgeGraph& kg, const TemplateTable& templates,
                        std::span<const EditRequest> edits, const EditEngineConfig& config) {
    if (edits.empty()) throw ConfigError("edit batch is empty");
    const auto facts = counterfactual_examples(kg, templates, edits, config.template_index);
    return FineTuneEngine(config).apply(pre, facts, "post-edit");
}

std::vector<EditOutcome> edit_sequence(const ModelSnapshot& pre, const KnowledgeGraph& kg,
                                       const TemplateTable& templates,
                                       std::span<const std::vector<EditRequest>> batches,
                                       const EditEngineConfig& config) {
    std::vector<EditOutcome> outcomes;
    outcomes.reserve(batches.size());
    const ModelSnapshot* current = &pre;
    for (const auto& batch : batches) {
        outcomes.push_back(apply_edits(*current, kg, templates, batch, config));
        current = &outcomes.back().post;
    }
    return outcomes;
}

}  // namespace ripple
