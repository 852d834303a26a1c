#pragma once
// Structural and statistical analyses of the ripple effect: ripple-network
// construction, the log-L1 graph edit distance, degree histograms and
// delta distribution statistics.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "ripple/editors.hpp"
#include "ripple/evaluation.hpp"

namespace ripple {

enum class GraphProvenance { VanillaKg, GieNetwork, RippleNetwork };
std::string_view to_string(GraphProvenance p);

// Undirected simple graph over entity ids [0, node_count).
class EntityGraph {
public:
    EntityGraph() = default;
    EntityGraph(std::size_t node_count, GraphProvenance provenance);

    std::size_t node_count() const noexcept { return node_count_; }
    std::size_t edge_count() const noexcept { return edges_.size(); }
    GraphProvenance provenance() const noexcept { return provenance_; }

    // Self-loops are ignored. Returns true if the edge is new.
    bool add_edge(EntityId a, EntityId b);
    bool has_edge(EntityId a, EntityId b) const;

    // Normalised (low, high) pairs in ascending order.
    std::vector<std::pair<EntityId, EntityId>> edges() const;
    std::vector<std::size_t> degrees() const;

    void write_tsv(const KnowledgeGraph& names, std::ostream& out) const;

private:
    static std::uint64_t key(EntityId a, EntityId b);

    std::size_t node_count_ = 0;
    GraphProvenance provenance_ = GraphProvenance::VanillaKg;
    std::map<std::uint64_t, std::pair<EntityId, EntityId>> edges_;
};

EntityGraph entity_graph_from_kg(const KnowledgeGraph& kg);

// Entity-level view of a triplet similarity graph: for a similar pair (a, b),
// link subj(a)-subj(b), obj(a)-subj(b) and obj(b)-subj(a), i.e. the edges the
// ripple network would add if either triplet were edited and the other damaged.
EntityGraph project_similarity_graph(const SimilarityGraph& sim, const KnowledgeGraph& kg);

struct GedResult {
    std::size_t l1 = 0;         // differing adjacency cells (both directions)
    std::optional<double> ged;  // ln(l1); absent when l1 == 0
};

GedResult ged(const EntityGraph& a, const EntityGraph& b);

struct GedRecord {
    std::size_t iteration = 0;
    std::size_t l1 = 0;
    std::optional<double> ged;
};

using GedTrace = std::vector<GedRecord>;

// GED(snapshot_i, reference_a) and GED(snapshot_i, reference_b) per iteration.
std::pair<GedTrace, GedTrace> ged_trace(std::span<const EntityGraph> ripple_snapshots,
                                        const EntityGraph& reference_a, const EntityGraph& reference_b);

// degree -> number of nodes with that degree (degree-0 nodes included).
std::map<std::size_t, std::size_t> degree_distribution(const EntityGraph& g);

struct Histogram {
    std::vector<double> edges;        // bins + 1 edges
    std::vector<std::size_t> counts;  // bins
};

struct DeltaStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
    double threshold = 0.0;  // mean + 2 * stddev
    std::vector<TripletId> outliers;  // delta > threshold, ascending id
    Histogram histogram;

    double outlier_fraction(std::size_t n) const {
        return n == 0 ? 0.0 : static_cast<double>(outliers.size()) / static_cast<double>(n);
    }
};

inline constexpr std::size_t kHistogramBins = 41;

// 41 equal-width bins on [mean - 4 sd, mean + 4 sd]; values outside are
// clipped into the end bins. With sd = 0 every value lands in the middle bin.
DeltaStats delta_stats(std::span<const MetricDelta> deltas);

struct RippleNetworkResult {
    std::vector<EntityGraph> snapshots;                // index 0: before any edit (edgeless)
    std::vector<std::vector<TripletId>> most_affected;  // per iteration, top-M
    std::vector<bool> edit_success;
    ModelSnapshot final_model;
};

// Applies edit_stream[i] to the current model, scores every not-yet-edited
// triplet (delta between the model before and after this edit), takes the M
// most damaged, and links their subject and object to the edited subject.
RippleNetworkResult build_ripple_network(const ModelSnapshot& pre, const Evaluator& evaluator,
                                         const TemplateTable& templates, std::span<const EditRequest> edit_stream,
                                         const EditEngine& engine, std::size_t top_m);

// Spearman rank correlation with average ranks for ties; 0 if either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ripple
