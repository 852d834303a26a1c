#pragma once
// Ripple-effect evaluators.
//
//   naive   - every non-edited triplet of the KG
//   vanilla - triplets within max_hop of the edited entities in the KG
//   gie     - triplets whose pre-edit prompt embedding has cosine > tau with
//             some edit target's prompt embedding
//   random  - a seeded uniform subset (baseline for GIE coverage)
//
// Cost is counted in model calls: two scoring calls per evaluated triplet
// (pre and post snapshot), plus one embedding call per triplet for GIE.

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ripple/kgstore.hpp"
#include "ripple/metrics.hpp"
#include "ripple/templates.hpp"
#include "ripple/tinylm.hpp"

namespace ripple {

struct GieConfig {
    double tau = 0.35;
    std::optional<std::size_t> max_selected;

    // tau must lie in [-1, 1]; tau = 1 selects nothing.
    void validate() const;
};

struct SelectionResult {
    std::vector<TripletId> selected;  // ascending id
    std::vector<double> similarity;   // max cosine to any edit target
    std::vector<std::size_t> source;  // index into the edit list achieving the max
    double tau = 0.0;
};

struct SimilarityEdge {
    TripletId a{};
    TripletId b{};
    double weight = 0.0;
};

// Triplet nodes; undirected edges (a < b) with cosine > tau.
struct SimilarityGraph {
    std::size_t node_count = 0;
    double tau = 0.0;
    std::vector<SimilarityEdge> edges;  // sorted by (a, b)

    std::vector<std::vector<TripletId>> adjacency() const;
};

// Unit-norm pre-edit prompt embeddings of every triplet's full sentence.
struct EmbeddingTable {
    Eigen::MatrixXd rows;  // triplet_count x d
    std::size_t degenerate = 0;
    std::uint64_t snapshot_hash = 0;
};

enum class ReportStatus { Ok, NoNeighbors, EmptySelection };
std::string_view to_string(ReportStatus s);

struct TripletRecord {
    TripletId id{};
    std::optional<int> hop;  // nullopt = disconnected
    double pre = 0.0;
    double post = 0.0;
    double delta = 0.0;
    std::optional<double> similarity;
};

// "1", "2", "3+" or "disconnected".
std::string hop_bucket_label(const std::optional<int>& hop);

struct HopBucket {
    std::string label;  // "1", "2", "3+", "disconnected"
    std::size_t count = 0;
    double mean_delta = 0.0;
    double sum_abs_delta = 0.0;
};

struct RippleReport {
    std::string evaluator;
    MetricKind metric = MetricKind::PPL;
    ReportStatus status = ReportStatus::Ok;
    std::vector<HopBucket> buckets;
    std::optional<double> mean_delta;  // R; absent when nothing was evaluated
    double total_abs_delta = 0.0;
    std::size_t evaluated = 0;
    std::size_t unevaluated = 0;
    std::size_t scoring_calls = 0;
    std::size_t embedding_calls = 0;
    std::vector<std::string> edits;  // "<s> | <r> | <o> -> <o'>"
    std::vector<TripletRecord> records;  // ascending id

    std::vector<MetricDelta> deltas() const;
};

struct EvalOptions {
    ScoreOptions metric{};
    std::size_t template_index = 0;
    unsigned jobs = 1;
};

// Holds the rendered prompts of one KG and a per-base-snapshot embedding cache.
// Evaluation methods are const and thread-safe.
class Evaluator {
public:
    Evaluator(const KnowledgeGraph& kg, const TemplateTable& templates, EvalOptions options = {});

    const KnowledgeGraph& kg() const noexcept { return *kg_; }
    const std::vector<PromptedFact>& facts() const noexcept { return facts_; }
    const EvalOptions& options() const noexcept { return options_; }

    RippleReport naive(const ModelSnapshot& pre, const ModelSnapshot& post, std::span<const EditRequest> edits) const;
    RippleReport vanilla(const ModelSnapshot& pre, const ModelSnapshot& post, std::span<const EditRequest> edits,
                         int max_hop = 3) const;
    SelectionResult gie_select(const ModelSnapshot& pre, std::span<const EditRequest> edits,
                               const GieConfig& gie) const;
    RippleReport gie(const ModelSnapshot& pre, const ModelSnapshot& post, std::span<const EditRequest> edits,
                     const GieConfig& gie) const;
    RippleReport random_subset(const ModelSnapshot& pre, const ModelSnapshot& post,
                               std::span<const EditRequest> edits, std::size_t count, std::uint64_t seed) const;

    // Scores an explicit triplet set (edit targets are dropped from it).
    RippleReport on_triplets(const ModelSnapshot& pre, const ModelSnapshot& post, std::span<const EditRequest> edits,
                             std::span<const TripletId> ids, std::string evaluator) const;

    std::shared_ptr<const EmbeddingTable> embeddings(const ModelSnapshot& pre) const;
    SimilarityGraph similarity_graph(const ModelSnapshot& pre, double tau) const;

    // Per-triplet metric deltas for an id set, in the given order.
    std::vector<MetricDelta> score_all(const ModelSnapshot& pre, const ModelSnapshot& post,
                                       std::span<const TripletId> ids) const;

private:
    RippleReport assemble(std::string evaluator, std::span<const EditRequest> edits, std::vector<TripletRecord> records,
                          std::size_t unevaluated) const;

    const KnowledgeGraph* kg_;
    std::vector<PromptedFact> facts_;
    EvalOptions options_;
    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::uint64_t, std::shared_ptr<const EmbeddingTable>> cache_;
};

// Free-function forms.
RippleReport eval_naive(const ModelSnapshot& pre, const ModelSnapshot& post, const KnowledgeGraph& kg,
                        const TemplateTable& templates, std::span<const EditRequest> edits,
                        const EvalOptions& options = {});
RippleReport eval_vanilla(const ModelSnapshot& pre, const ModelSnapshot& post, const KnowledgeGraph& kg,
                          const TemplateTable& templates, std::span<const EditRequest> edits,
                          const EvalOptions& options = {}, int max_hop = 3);
SelectionResult gie_select(const ModelSnapshot& pre, const KnowledgeGraph& kg, const TemplateTable& templates,
                           std::span<const EditRequest> edits, const GieConfig& gie,
                           const EvalOptions& options = {});
RippleReport eval_gie(const ModelSnapshot& pre, const ModelSnapshot& post, const KnowledgeGraph& kg,
                      const TemplateTable& templates, std::span<const EditRequest> edits, const GieConfig& gie,
                      const EvalOptions& options = {});

EmbeddingTable compute_embeddings(const ModelSnapshot& pre, std::span<const PromptedFact> facts);

// All pairs with cosine > tau, O(n^2).
SimilarityGraph build_similarity_graph(const EmbeddingTable& table, double tau);
SimilarityGraph build_similarity_graph(const ModelSnapshot& pre, const KnowledgeGraph& kg,
                                       const TemplateTable& templates, double tau, std::size_t template_index = 0);

std::string describe_edit(const KnowledgeGraph& kg, const EditRequest& e);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is visited once.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

}  // namespace ripple
