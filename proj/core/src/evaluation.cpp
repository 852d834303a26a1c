#include "ripple/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "ripple/error.hpp"
#include "ripple/rng.hpp"

namespace ripple {

namespace {

constexpr std::size_t kScoreChunk = 128;

}  // namespace

std::string hop_bucket_label(const std::optional<int>& hop) {
    if (!hop) return "disconnected";
    if (*hop <= 1) return "1";
    if (*hop == 2) return "2";
    return "3+";
}

namespace {

std::set<TripletId> edited_ids(std::span<const EditRequest> edits) {
    std::set<TripletId> ids;
    for (const auto& e : edits) ids.insert(e.original.id);
    return ids;
}

std::vector<EntityId> edited_entities(std::span<const EditRequest> edits) {
    std::vector<EntityId> ents;
    for (const auto& e : edits) {
        ents.push_back(e.original.subject);
        ents.push_back(e.original.object);
    }
    std::sort(ents.begin(), ents.end());
    ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
    return ents;
}

// Full-sentence or object-only PPL for a run of facts, one batched forward pass.
std::vector<double> batched_ppl(const ModelSnapshot& snap, std::span<const PromptedFact* const> facts, PplScope scope) {
    std::vector<Sequence> seqs;
    seqs.reserve(facts.size());
    for (const auto* f : facts) {
        seqs.push_back(scope == PplScope::FullSentence ? make_sequence(snap.vocab(), f->sentence)
                                                       : make_conditional_sequence(snap.vocab(), f->prefix, f->sentence));
        if (seqs.back().target_count() == 0) throw ConfigError("fact renders to an empty sentence");
    }
    auto losses = batch_losses(snap.params(), seqs);
    for (double& l : losses) l = std::exp(l);
    return losses;
}

}  // namespace

void GieConfig::validate() const {
    if (!std::isfinite(tau) || tau < -1.0 || tau > 1.0) throw ConfigError("gie.tau must lie in [-1, 1]");
    if (max_selected && *max_selected == 0) throw ConfigError("gie.max_selected must be >= 1 when set");
}

std::vector<std::vector<TripletId>> SimilarityGraph::adjacency() const {
    std::vector<std::vector<TripletId>> adj(node_count);
    for (const auto& e : edges) {
        adj[to_index(e.a)].push_back(e.b);
        adj[to_index(e.b)].push_back(e.a);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
}

std::string_view to_string(ReportStatus s) {
    switch (s) {
        case ReportStatus::Ok: return "ok";
        case ReportStatus::NoNeighbors: return "no_neighbors";
        case ReportStatus::EmptySelection: return "empty_selection";
    }
    return "?";
}

std::vector<MetricDelta> RippleReport::deltas() const {
    std::vector<MetricDelta> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.id, r.pre, r.post, r.delta});
    return out;
}

std::string describe_edit(const KnowledgeGraph& kg, const EditRequest& e) {
    return kg.entity_name(e.original.subject) + " | " + kg.relation_name(e.original.relation) + " | " +
           kg.entity_name(e.original.object) + " -> " + kg.entity_name(e.new_object);
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto count = std::min<std::size_t>(jobs, n);
    for (std::size_t w = 0; w < count; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---- embeddings / similarity ---------------------------------------------------

EmbeddingTable compute_embeddings(const ModelSnapshot& pre, std::span<const PromptedFact> facts) {
    EmbeddingTable table;
    table.snapshot_hash = pre.param_hash();
    table.rows.resize(static_cast<Eigen::Index>(facts.size()), pre.params().embedding.cols());
    for (std::size_t i = 0; i < facts.size(); ++i) {
        const auto e = embed_prompt(pre, facts[i].sentence);
        table.rows.row(static_cast<Eigen::Index>(i)) = e.vector.transpose();
        if (e.degenerate) ++table.degenerate;
    }
    return table;
}

SimilarityGraph build_similarity_graph(const EmbeddingTable& table, double tau) {
    SimilarityGraph g;
    g.node_count = static_cast<std::size_t>(table.rows.rows());
    g.tau = tau;
    const Eigen::Index n = table.rows.rows();
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const Eigen::VectorXd sims = table.rows.bottomRows(n - i - 1) * table.rows.row(i).transpose();
        for (Eigen::Index k = 0; k < sims.size(); ++k) {
            if (sims(k) > tau) {
                g.edges.push_back({from_index<TripletId>(static_cast<std::size_t>(i)),
                                   from_index<TripletId>(static_cast<std::size_t>(i + 1 + k)), sims(k)});
            }
        }
    }
    return g;
}

SimilarityGraph build_similarity_graph(const ModelSnapshot& pre, const KnowledgeGraph& kg,
                                       const TemplateTable& templates, double tau, std::size_t template_index) {
    const auto facts = render_all(kg, templates, template_index);
    return build_similarity_graph(compute_embeddings(pre, facts), tau);
}

// ---- Evaluator -------------------------------------------------------------------

Evaluator::Evaluator(const KnowledgeGraph& kg, const TemplateTable& templates, EvalOptions options)
    : kg_(&kg), facts_(render_all(kg, templates, options.template_index)), options_(options) {}

std::shared_ptr<const EmbeddingTable> Evaluator::embeddings(const ModelSnapshot& pre) const {
    std::lock_guard lock(cache_mutex_);
    auto& slot = cache_[pre.param_hash()];
    if (!slot) slot = std::make_shared<const EmbeddingTable>(compute_embeddings(pre, facts_));
    return slot;
}

SimilarityGraph Evaluator::similarity_graph(const ModelSnapshot& pre, double tau) const {
    return build_similarity_graph(*embeddings(pre), tau);
}

std::vector<MetricDelta> Evaluator::score_all(const ModelSnapshot& pre, const ModelSnapshot& post,
                                              std::span<const TripletId> ids) const {
    std::vector<MetricDelta> out(ids.size());
    const auto& opts = options_.metric;

    if (opts.kind == MetricKind::PPL) {
        const std::size_t chunks = (ids.size() + kScoreChunk - 1) / kScoreChunk;
        parallel_for(chunks, options_.jobs, [&](std::size_t c) {
            const std::size_t begin = c * kScoreChunk;
            const std::size_t end = std::min(ids.size(), begin + kScoreChunk);
            std::vector<const PromptedFact*> batch;
            for (std::size_t i = begin; i < end; ++i) batch.push_back(&facts_.at(to_index(ids[i])));
            const auto pre_ppl = batched_ppl(pre, batch, opts.scope);
            const auto post_ppl = batched_ppl(post, batch, opts.scope);
            for (std::size_t i = begin; i < end; ++i) {
                auto& d = out[i];
                d.triplet = ids[i];
                d.pre = pre_ppl[i - begin];
                d.post = post_ppl[i - begin];
                d.delta = d.post - d.pre;
                if (!std::isfinite(d.pre) || !std::isfinite(d.post)) throw Error("non-finite perplexity");
            }
        });
    } else {
        parallel_for(ids.size(), options_.jobs,
                     [&](std::size_t i) { out[i] = score(opts, pre, post, facts_.at(to_index(ids[i]))); });
    }
    return out;
}

RippleReport Evaluator::assemble(std::string evaluator, std::span<const EditRequest> edits,
                                 std::vector<TripletRecord> records, std::size_t unevaluated) const {
    RippleReport rep;
    rep.evaluator = std::move(evaluator);
    rep.metric = options_.metric.kind;
    rep.unevaluated = unevaluated;
    for (const auto& e : edits) rep.edits.push_back(describe_edit(*kg_, e));
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    const std::vector<std::string> labels{"1", "2", "3+", "disconnected"};
    std::vector<double> sums(labels.size(), 0.0);
    rep.buckets.resize(labels.size());
    for (std::size_t b = 0; b < labels.size(); ++b) rep.buckets[b].label = labels[b];

    double total = 0.0;
    for (const auto& r : records) {
        const auto label = hop_bucket_label(r.hop);
        const auto b = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), label) - labels.begin());
        rep.buckets[b].count += 1;
        rep.buckets[b].sum_abs_delta += std::abs(r.delta);
        sums[b] += r.delta;
        total += r.delta;
        rep.total_abs_delta += std::abs(r.delta);
    }
    for (std::size_t b = 0; b < labels.size(); ++b) {
        if (rep.buckets[b].count > 0) rep.buckets[b].mean_delta = sums[b] / static_cast<double>(rep.buckets[b].count);
    }
    rep.evaluated = records.size();
    rep.scoring_calls = 2 * records.size();
    if (!records.empty()) rep.mean_delta = total / static_cast<double>(records.size());
    rep.records = std::move(records);
    return rep;
}

RippleReport Evaluator::on_triplets(const ModelSnapshot& pre, const ModelSnapshot& post,
                                    std::span<const EditRequest> edits, std::span<const TripletId> ids,
                                    std::string evaluator) const {
    const auto excluded = edited_ids(edits);
    std::vector<TripletId> keep;
    for (TripletId id : ids) {
        if (!excluded.contains(id)) keep.push_back(id);
    }
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());

    const auto ents = edited_entities(edits);
    const auto hops = hop_distances(*kg_, ents);
    const auto deltas = score_all(pre, post, keep);
    std::vector<TripletRecord> records;
    records.reserve(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        records.push_back({keep[i], hops[to_index(keep[i])], deltas[i].pre, deltas[i].post, deltas[i].delta, {}});
    }
    return assemble(std::move(evaluator), edits, std::move(records), 0);
}

RippleReport Evaluator::naive(const ModelSnapshot& pre, const ModelSnapshot& post,
                              std::span<const EditRequest> edits) const {
    const auto excluded = edited_ids(edits);
    std::vector<TripletId> ids;
    for (const auto& t : kg_->triplets()) {
        if (!excluded.contains(t.id)) ids.push_back(t.id);
    }
    if (ids.empty()) throw ConfigError("eval_naive: no triplets left after excluding the edit targets");
    return on_triplets(pre, post, edits, ids, "naive");
}

RippleReport Evaluator::vanilla(const ModelSnapshot& pre, const ModelSnapshot& post,
                                std::span<const EditRequest> edits, int max_hop) const {
    const auto excluded = edited_ids(edits);
    const auto hops = hop_distances(*kg_, edited_entities(edits));
    std::vector<TripletId> ids;
    std::size_t skipped = 0;
    for (const auto& t : kg_->triplets()) {
        if (excluded.contains(t.id)) continue;
        const auto& h = hops[to_index(t.id)];
        if (h && *h <= max_hop) {
            ids.push_back(t.id);
        } else {
            ++skipped;
        }
    }
    auto rep = on_triplets(pre, post, edits, ids, "vanilla");
    rep.unevaluated = skipped;
    if (rep.evaluated == 0) rep.status = ReportStatus::NoNeighbors;
    return rep;
}

SelectionResult Evaluator::gie_select(const ModelSnapshot& pre, std::span<const EditRequest> edits,
                                      const GieConfig& gie) const {
    gie.validate();
    SelectionResult sel;
    sel.tau = gie.tau;
    if (edits.empty()) return sel;

    const auto table = embeddings(pre);
    const auto excluded = edited_ids(edits);
    Eigen::MatrixXd targets(static_cast<Eigen::Index>(edits.size()), table->rows.cols());
    for (std::size_t j = 0; j < edits.size(); ++j) {
        targets.row(static_cast<Eigen::Index>(j)) = table->rows.row(static_cast<Eigen::Index>(to_index(edits[j].original.id)));
    }
    const Eigen::MatrixXd sims = table->rows * targets.transpose();  // n x edits

    struct Pick {
        TripletId id;
        double sim;
        std::size_t source;
    };
    std::vector<Pick> picks;
    for (std::size_t i = 0; i < kg_->triplet_count(); ++i) {
        const auto id = from_index<TripletId>(i);
        if (excluded.contains(id)) continue;
        std::size_t best = 0;
        for (std::size_t j = 1; j < edits.size(); ++j) {
            if (sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >
                sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best))) {
                best = j;
            }
        }
        const double s = sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best));
        if (s > gie.tau) picks.push_back({id, s, best});
    }
    if (gie.max_selected && picks.size() > *gie.max_selected) {
        std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
            return a.sim != b.sim ? a.sim > b.sim : a.id < b.id;
        });
        picks.resize(*gie.max_selected);
        std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) { return a.id < b.id; });
    }
    for (const auto& p : picks) {
        sel.selected.push_back(p.id);
        sel.similarity.push_back(p.sim);
        sel.source.push_back(p.source);
    }
    return sel;
}

RippleReport Evaluator::gie(const ModelSnapshot& pre, const ModelSnapshot& post, std::span<const EditRequest> edits,
                            const GieConfig& gie) const {
    const auto sel = gie_select(pre, edits, gie);
    const auto deltas = score_all(pre, post, sel.selected);
    std::vector<TripletRecord> records;
    records.reserve(sel.selected.size());
    // Every selected triplet shares a similarity edge with an edit node, so it
    // sits at hop 1 of the similarity graph.
    for (std::size_t i = 0; i < sel.selected.size(); ++i) {
        records.push_back({sel.selected[i], 1, deltas[i].pre, deltas[i].post, deltas[i].delta, sel.similarity[i]});
    }
    auto rep = assemble("gie", edits, std::move(records), kg_->triplet_count() - edited_ids(edits).size() -
                                                              sel.selected.size());
    rep.embedding_calls = kg_->triplet_count();
    if (rep.evaluated == 0) rep.status = ReportStatus::EmptySelection;
    return rep;
}

RippleReport Evaluator::random_subset(const ModelSnapshot& pre, const ModelSnapshot& post,
                                      std::span<const EditRequest> edits, std::size_t count,
                                      std::uint64_t seed) const {
    const auto excluded = edited_ids(edits);
    std::vector<TripletId> pool;
    for (const auto& t : kg_->triplets()) {
        if (!excluded.contains(t.id)) pool.push_back(t.id);
    }
    count = std::min(count, pool.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    auto rep = on_triplets(pre, post, edits, pool, "random");
    rep.unevaluated = kg_->triplet_count() - excluded.size() - rep.evaluated;
    return rep;
}

// ---- free functions ----------------------------------------------------------------

RippleReport eval_naive(const ModelSnapshot& pre, const ModelSnapshot& post, const KnowledgeGraph& kg,
                        const TemplateTable& templates, std::span<const EditRequest> edits,
                        const EvalOptions& options) {
    return Evaluator(kg, templates, options).naive(pre, post, edits);
}

RippleReport eval_vanilla(const ModelSnapshot& pre, const ModelSnapshot& post, const KnowledgeGraph& kg,
                          const TemplateTable& templates, std::span<const EditRequest> edits,
                          const EvalOptions& options, int max_hop) {
    return Evaluator(kg, templates, options).vanilla(pre, post, edits, max_hop);
}

SelectionResult gie_select(const ModelSnapshot& pre, const KnowledgeGraph& kg, const TemplateTable& templates,
                           std::span<const EditRequest> edits, const GieConfig& gie, const EvalOptions& options) {
    return Evaluator(kg, templates, options).gie_select(pre, edits, gie);
}

RippleReport eval_gie(const ModelSnapshot& pre, const ModelSnapshot& post, const KnowledgeGraph& kg,
                      const TemplateTable& templates, std::span<const EditRequest> edits, const GieConfig& gie,
                      const EvalOptions& options) {
    return Evaluator(kg, templates, options).gie(pre, post, edits, gie);
}

}  // namespace ripple
