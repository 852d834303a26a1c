#include "ripple/sir.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "ripple/error.hpp"

namespace ripple {

std::string_view to_string(CandidatePool p) {
    return p == CandidatePool::GieSelected ? "gie" : "full_kg";
}

CandidatePool parse_candidate_pool(std::string_view s) {
    if (s == "gie") return CandidatePool::GieSelected;
    if (s == "full_kg") return CandidatePool::FullKg;
    throw ConfigError("unknown SIR candidate pool '" + std::string(s) + "'");
}

std::string_view to_string(SirOutcome::Status s) {
    return s == SirOutcome::Status::Revised ? "revised" : "nothing_to_revise";
}

void SirConfig::validate() const {
    if (k == 0) throw ConfigError("sir.k must be >= 1");
    gie.validate();
    revision.validate();
}

std::vector<TripletId> select_topk(std::span<const MetricDelta> deltas, std::size_t k, MetricKind kind) {
    if (k == 0) throw ConfigError("select_topk: K must be >= 1");
    if (deltas.empty()) throw ConfigError("select_topk: no deltas");
    std::vector<std::size_t> order(deltas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto by_damage = [&](std::size_t a, std::size_t b) {
        const double da = damage(kind, deltas[a].delta);
        const double db = damage(kind, deltas[b].delta);
        return da != db ? da > db : deltas[a].triplet < deltas[b].triplet;
    };
    const std::size_t take = std::min(k, deltas.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), by_damage);
    std::vector<TripletId> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(deltas[order[i]].triplet);
    return out;
}

namespace {

std::vector<double> edit_ppls(const ModelSnapshot& snap, std::span<const FactExample> facts, PplScope scope) {
    std::vector<double> out;
    out.reserve(facts.size());
    for (const auto& f : facts) {
        out.push_back(scope == PplScope::ObjectOnly ? conditional_perplexity(snap, f.prefix, f.sentence)
                                                    : perplexity(snap, f.sentence));
    }
    return out;
}

}  // namespace

SirOutcome revise(const ModelSnapshot& post_edit, const ModelSnapshot& pre_edit, const Evaluator& evaluator,
                  const TemplateTable& templates, std::span<const EditRequest> edits, const SirConfig& config) {
    config.validate();
    if (post_edit.vocab().hash() != pre_edit.vocab().hash()) {
        throw ConfigError("SIR: post-edit snapshot does not share the pre-edit vocabulary");
    }
    const auto& kg = evaluator.kg();

    std::set<TripletId> excluded;
    for (const auto& e : edits) excluded.insert(e.original.id);

    std::vector<TripletId> pool;
    if (config.pool == CandidatePool::GieSelected) {
        pool = evaluator.gie_select(pre_edit, edits, config.gie).selected;
    } else {
        for (const auto& t : kg.triplets()) {
            if (!excluded.contains(t.id)) pool.push_back(t.id);
        }
    }

    SirOutcome out;
    out.pool_size = pool.size();

    std::vector<MetricDelta> deltas;
    if (!pool.empty()) {
        if (config.ranking_metric == evaluator.options().metric.kind) {
            deltas = evaluator.score_all(pre_edit, post_edit, pool);
        } else {
            ScoreOptions opts = evaluator.options().metric;
            opts.kind = config.ranking_metric;
            for (TripletId id : pool) deltas.push_back(score(opts, pre_edit, post_edit, evaluator.facts().at(to_index(id))));
        }
    }

    const auto cf = counterfactual_examples(kg, templates, edits, config.revision.template_index);
    const auto scope = evaluator.options().metric.scope;
    out.edit_ppl_pre = edit_ppls(pre_edit, cf, scope);
    out.edit_ppl_post_edit = edit_ppls(post_edit, cf, scope);

    ModelSnapshot revised = post_edit;
    if (deltas.empty()) {
        out.status = SirOutcome::Status::NothingToRevise;
    } else {
        out.selected = select_topk(deltas, config.k, config.ranking_metric);
        for (TripletId id : out.selected) {
            const auto it = std::find_if(deltas.begin(), deltas.end(), [id](const auto& d) { return d.triplet == id; });
            out.selected_deltas.push_back(it->delta);
        }
        const auto facts = original_examples(kg, templates, out.selected, config.revision.template_index);
        const auto result = FineTuneEngine(config.revision).apply(post_edit, facts, "post-sir");
        revised = result.post;
        out.revision_steps = result.steps;
        out.revision_loss = result.final_mean_loss;
    }
    out.post_sir = revised;
    out.edit_ppl_post_sir = edit_ppls(revised, cf, scope);

    out.selected_before = evaluator.on_triplets(pre_edit, post_edit, edits, out.selected, "sir-selected-before");
    out.selected_after = evaluator.on_triplets(pre_edit, revised, edits, out.selected, "sir-selected-after");
    out.full_before = evaluator.naive(pre_edit, post_edit, edits);
    out.full_after = evaluator.naive(pre_edit, revised, edits);
    return out;
}

}  // namespace ripple
