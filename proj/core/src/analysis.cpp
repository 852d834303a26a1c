#include "ripple/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "ripple/error.hpp"
#include "ripple/sir.hpp"

namespace ripple {

std::string_view to_string(GraphProvenance p) {
    switch (p) {
        case GraphProvenance::VanillaKg: return "vanilla_kg";
        case GraphProvenance::GieNetwork: return "gie_network";
        case GraphProvenance::RippleNetwork: return "ripple_network";
    }
    return "?";
}

EntityGraph::EntityGraph(std::size_t node_count, GraphProvenance provenance)
    : node_count_(node_count), provenance_(provenance) {}

std::uint64_t EntityGraph::key(EntityId a, EntityId b) {
    const auto lo = std::min(to_index(a), to_index(b));
    const auto hi = std::max(to_index(a), to_index(b));
    return (static_cast<std::uint64_t>(lo) << 32) | static_cast<std::uint64_t>(hi);
}

bool EntityGraph::add_edge(EntityId a, EntityId b) {
    if (a == b) return false;
    node_count_ = std::max({node_count_, to_index(a) + 1, to_index(b) + 1});
    const auto lo = std::min(a, b);
    const auto hi = std::max(a, b);
    return edges_.emplace(key(a, b), std::pair{lo, hi}).second;
}

bool EntityGraph::has_edge(EntityId a, EntityId b) const {
    return a != b && edges_.contains(key(a, b));
}

std::vector<std::pair<EntityId, EntityId>> EntityGraph::edges() const {
    std::vector<std::pair<EntityId, EntityId>> out;
    out.reserve(edges_.size());
    for (const auto& [k, e] : edges_) out.push_back(e);
    return out;
}

std::vector<std::size_t> EntityGraph::degrees() const {
    std::vector<std::size_t> deg(node_count_, 0);
    for (const auto& [k, e] : edges_) {
        ++deg[to_index(e.first)];
        ++deg[to_index(e.second)];
    }
    return deg;
}

void EntityGraph::write_tsv(const KnowledgeGraph& names, std::ostream& out) const {
    for (const auto& [k, e] : edges_) {
        out << names.entity_name(e.first) << '\t' << names.entity_name(e.second) << '\n';
    }
}

EntityGraph entity_graph_from_kg(const KnowledgeGraph& kg) {
    EntityGraph g(kg.entity_count(), GraphProvenance::VanillaKg);
    for (const auto& t : kg.triplets()) g.add_edge(t.subject, t.object);
    return g;
}

EntityGraph project_similarity_graph(const SimilarityGraph& sim, const KnowledgeGraph& kg) {
    EntityGraph g(kg.entity_count(), GraphProvenance::GieNetwork);
    for (const auto& e : sim.edges) {
        const auto& a = kg.triplet(e.a);
        const auto& b = kg.triplet(e.b);
        g.add_edge(a.subject, b.subject);
        g.add_edge(a.object, b.subject);
        g.add_edge(b.object, a.subject);
    }
    return g;
}

GedResult ged(const EntityGraph& a, const EntityGraph& b) {
    std::size_t differing = 0;
    for (const auto& [x, y] : a.edges()) {
        if (!b.has_edge(x, y)) ++differing;
    }
    for (const auto& [x, y] : b.edges()) {
        if (!a.has_edge(x, y)) ++differing;
    }
    GedResult r;
    r.l1 = 2 * differing;  // each undirected edge is two adjacency cells
    if (r.l1 > 0) r.ged = std::log(static_cast<double>(r.l1));
    return r;
}

std::pair<GedTrace, GedTrace> ged_trace(std::span<const EntityGraph> ripple_snapshots,
                                        const EntityGraph& reference_a, const EntityGraph& reference_b) {
    std::pair<GedTrace, GedTrace> out;
    for (std::size_t i = 0; i < ripple_snapshots.size(); ++i) {
        const auto ga = ged(ripple_snapshots[i], reference_a);
        const auto gb = ged(ripple_snapshots[i], reference_b);
        out.first.push_back({i, ga.l1, ga.ged});
        out.second.push_back({i, gb.l1, gb.ged});
    }
    return out;
}

std::map<std::size_t, std::size_t> degree_distribution(const EntityGraph& g) {
    std::map<std::size_t, std::size_t> hist;
    for (std::size_t d : g.degrees()) ++hist[d];
    return hist;
}

DeltaStats delta_stats(std::span<const MetricDelta> deltas) {
    if (deltas.empty()) throw ConfigError("delta_stats: no deltas");
    const double n = static_cast<double>(deltas.size());
    double sum = 0.0;
    for (const auto& d : deltas) sum += d.delta;
    DeltaStats s;
    s.mean = sum / n;
    double ss = 0.0;
    for (const auto& d : deltas) ss += (d.delta - s.mean) * (d.delta - s.mean);
    s.stddev = std::sqrt(ss / n);
    s.threshold = s.mean + 2.0 * s.stddev;
    for (const auto& d : deltas) {
        if (d.delta > s.threshold) s.outliers.push_back(d.triplet);
    }
    std::sort(s.outliers.begin(), s.outliers.end());

    const double lo = s.mean - 4.0 * s.stddev;
    const double width = 8.0 * s.stddev / static_cast<double>(kHistogramBins);
    s.histogram.counts.assign(kHistogramBins, 0);
    for (std::size_t b = 0; b <= kHistogramBins; ++b) s.histogram.edges.push_back(lo + width * static_cast<double>(b));
    for (const auto& d : deltas) {
        std::size_t bin = kHistogramBins / 2;
        if (width > 0.0) {
            const double pos = std::floor((d.delta - lo) / width);
            bin = pos < 0.0 ? 0 : std::min(kHistogramBins - 1, static_cast<std::size_t>(pos));
        }
        ++s.histogram.counts[bin];
    }
    return s;
}

RippleNetworkResult build_ripple_network(const ModelSnapshot& pre, const Evaluator& evaluator,
                                         const TemplateTable& templates, std::span<const EditRequest> edit_stream,
                                         const EditEngine& engine, std::size_t top_m) {
    if (edit_stream.empty()) throw ConfigError("ripple network: empty edit stream");
    if (top_m == 0) throw ConfigError("ripple network: M must be >= 1");
    const auto& kg = evaluator.kg();

    RippleNetworkResult out{{}, {}, {}, pre};
    EntityGraph graph(kg.entity_count(), GraphProvenance::RippleNetwork);
    out.snapshots.push_back(graph);

    std::set<TripletId> edited;
    ModelSnapshot current = pre;
    for (std::size_t i = 0; i < edit_stream.size(); ++i) {
        const auto& edit = edit_stream[i];
        edited.insert(edit.original.id);
        const auto facts = counterfactual_examples(kg, templates, std::span(&edit, 1), 0);
        auto outcome = engine.apply(current, facts, "ripple-" + std::to_string(i + 1));
        out.edit_success.push_back(outcome.success);

        std::vector<TripletId> ids;
        for (const auto& t : kg.triplets()) {
            if (!edited.contains(t.id)) ids.push_back(t.id);
        }
        const auto deltas = evaluator.score_all(current, outcome.post, ids);
        auto affected = select_topk(deltas, top_m, evaluator.options().metric.kind);
        for (TripletId id : affected) {
            const auto& t = kg.triplet(id);
            graph.add_edge(t.subject, edit.original.subject);
            graph.add_edge(t.object, edit.original.subject);
        }
        out.most_affected.push_back(std::move(affected));
        out.snapshots.push_back(graph);
        current = outcome.post;
    }
    out.final_model = current;
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ConfigError("spearman: length mismatch");
    if (x.size() < 2) return 0.0;
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace ripple
