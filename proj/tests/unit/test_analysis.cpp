#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ripple/analysis.hpp"
#include "ripple/error.hpp"
#include "ripple/rng.hpp"

using namespace ripple;

namespace {

EntityId node(std::uint32_t i) { return from_index<EntityId>(i); }

EntityGraph graph(std::size_t n, std::initializer_list<std::pair<int, int>> edges,
                  GraphProvenance p = GraphProvenance::RippleNetwork) {
    EntityGraph g(n, p);
    for (auto [a, b] : edges) g.add_edge(node(a), node(b));
    return g;
}

std::vector<MetricDelta> deltas_of(const std::vector<double>& values) {
    std::vector<MetricDelta> out;
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back({from_index<TripletId>(i), 0.0, values[i], values[i]});
    return out;
}

void expect_degree_sums(const EntityGraph& g) {
    const auto dist = degree_distribution(g);
    std::size_t nodes = 0, degree_sum = 0;
    for (auto [deg, freq] : dist) {
        nodes += freq;
        degree_sum += deg * freq;
    }
    EXPECT_EQ(nodes, g.node_count());
    EXPECT_EQ(degree_sum, 2 * g.edge_count());
}

struct RippleScenario {
    KnowledgeGraph kg = fixtures::small_kg();
    TemplateTable templates = TemplateTable::builtin();
    ModelSnapshot pre = fixtures::trained_model(kg, templates, 30);
    Evaluator evaluator{kg, templates};
    std::vector<EditRequest> stream;

    explicit RippleScenario(std::size_t iterations) {
        for (const auto& t : kg.triplets()) {
            if (stream.size() == iterations) break;
            if (is_editable(kg, t)) stream.push_back(make_edit_request(kg, t, 31 + to_index(t.id)));
        }
    }

    RippleNetworkResult run(std::size_t top_m) const {
        return build_ripple_network(pre, evaluator, templates, stream, *make_engine(EditEngineConfig{}), top_m);
    }
};

}  // namespace

TEST(EntityGraph, SymmetricWithoutSelfLoops) {
    EntityGraph g(4, GraphProvenance::VanillaKg);
    EXPECT_TRUE(g.add_edge(node(2), node(1)));
    EXPECT_FALSE(g.add_edge(node(1), node(2)));
    EXPECT_FALSE(g.add_edge(node(3), node(3)));
    EXPECT_TRUE(g.has_edge(node(1), node(2)));
    EXPECT_TRUE(g.has_edge(node(2), node(1)));
    EXPECT_EQ(g.edge_count(), 1u);
    EXPECT_EQ(g.edges().front(), std::make_pair(node(1), node(2)));
}

TEST(EntityGraph, FromKgAndTsv) {
    const auto kg = fixtures::path_graph();
    const auto g = entity_graph_from_kg(kg);
    EXPECT_EQ(g.node_count(), 6u);
    EXPECT_EQ(g.edge_count(), 5u);
    std::ostringstream out;
    g.write_tsv(kg, out);
    EXPECT_EQ(out.str().substr(0, 4), "a\tb\n");
}

TEST(Ged, IdenticalGraphsHaveNoDistance) {
    const auto g = graph(3, {{0, 1}, {1, 2}});
    const auto r = ged(g, g);
    EXPECT_EQ(r.l1, 0u);
    EXPECT_FALSE(r.ged.has_value());
}

TEST(Ged, OneEdgeDiffers) {
    const auto r = ged(graph(3, {{0, 1}}), graph(3, {{0, 1}, {1, 2}}));
    EXPECT_EQ(r.l1, 2u);
    EXPECT_NEAR(*r.ged, std::log(2.0), 1e-15);
}

TEST(Ged, EdgelessVersusTriangle) {
    const auto r = ged(graph(3, {}), graph(3, {{0, 1}, {1, 2}, {0, 2}}));
    EXPECT_EQ(r.l1, 6u);
    EXPECT_NEAR(*r.ged, std::log(6.0), 1e-15);
}

TEST(Ged, SymmetricAndUnionsNodeSets) {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        EntityGraph a(6, GraphProvenance::RippleNetwork);
        EntityGraph b(9, GraphProvenance::VanillaKg);
        for (int e = 0; e < 8; ++e) {
            a.add_edge(node(static_cast<std::uint32_t>(uniform_index(rng, 6))), node(static_cast<std::uint32_t>(uniform_index(rng, 6))));
            b.add_edge(node(static_cast<std::uint32_t>(uniform_index(rng, 9))), node(static_cast<std::uint32_t>(uniform_index(rng, 9))));
        }
        EXPECT_EQ(ged(a, b).l1, ged(b, a).l1);
        EXPECT_EQ(ged(a, a).l1, 0u);
        // Brute-force matrix L1 over the union of node ids.
        std::size_t l1 = 0;
        for (std::uint32_t i = 0; i < 9; ++i) {
            for (std::uint32_t j = 0; j < 9; ++j) {
                if (i == j) continue;
                const bool in_a = i < 6 && j < 6 && a.has_edge(node(i), node(j));
                l1 += in_a != b.has_edge(node(i), node(j)) ? 1 : 0;
            }
        }
        EXPECT_EQ(ged(a, b).l1, l1);
    }
}

TEST(GedTrace, ConstantAndSingleSnapshots) {
    const auto ref_a = graph(4, {{0, 1}});
    const auto ref_b = graph(4, {{2, 3}, {1, 2}});
    const std::vector<EntityGraph> same(3, graph(4, {{0, 2}}));
    const auto [ta, tb] = ged_trace(same, ref_a, ref_b);
    ASSERT_EQ(ta.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(ta[i].iteration, i);
        EXPECT_EQ(ta[i].l1, ta[0].l1);
        EXPECT_EQ(tb[i].l1, tb[0].l1);
    }
    const std::vector<EntityGraph> one{graph(4, {})};
    const auto [sa, sb] = ged_trace(one, ref_a, ref_b);
    ASSERT_EQ(sa.size(), 1u);
    EXPECT_EQ(sa[0].l1, 2u);
    EXPECT_EQ(sb[0].l1, 4u);
}

TEST(DegreeDistribution, HandCounts) {
    using Dist = std::map<std::size_t, std::size_t>;
    EXPECT_EQ(degree_distribution(graph(7, {})), (Dist{{0, 7}}));
    EXPECT_EQ(degree_distribution(graph(3, {{0, 1}, {1, 2}, {0, 2}})), (Dist{{2, 3}}));
    EXPECT_EQ(degree_distribution(graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}})), (Dist{{1, 4}, {4, 1}}));
}

TEST(DegreeDistribution, SumsMatchCounts) {
    expect_degree_sums(entity_graph_from_kg(fixtures::small_kg()));
    expect_degree_sums(graph(6, {{0, 1}, {0, 2}, {4, 5}}));
}

TEST(DeltaStats, HandArithmetic) {
    const auto s = delta_stats(deltas_of({0, 0, 0, 0, 10}));
    EXPECT_DOUBLE_EQ(s.mean, 2.0);
    EXPECT_DOUBLE_EQ(s.stddev, 4.0);
    EXPECT_DOUBLE_EQ(s.threshold, 10.0);
    EXPECT_TRUE(s.outliers.empty());
    EXPECT_EQ(s.histogram.counts.size(), kHistogramBins);
    EXPECT_EQ(s.histogram.edges.size(), kHistogramBins + 1);
    EXPECT_DOUBLE_EQ(s.histogram.edges.front(), 2.0 - 16.0);
    EXPECT_DOUBLE_EQ(s.histogram.edges.back(), 2.0 + 16.0);
    EXPECT_EQ(std::accumulate(s.histogram.counts.begin(), s.histogram.counts.end(), std::size_t{0}), 5u);
}

TEST(DeltaStats, ConstantDeltas) {
    const auto s = delta_stats(deltas_of({1.5, 1.5, 1.5}));
    EXPECT_EQ(s.stddev, 0.0);
    EXPECT_TRUE(s.outliers.empty());
    EXPECT_EQ(s.histogram.counts[kHistogramBins / 2], 3u);
}

TEST(DeltaStats, EmptyRejected) { EXPECT_THROW(delta_stats(std::vector<MetricDelta>{}), ConfigError); }

TEST(DeltaStats, NormalSampleOutlierFraction) {
    std::mt19937_64 gen(20240);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(10'000);
    for (auto& x : v) x = normal(gen);
    const auto s = delta_stats(deltas_of(v));
    EXPECT_NEAR(s.outlier_fraction(v.size()), 0.0228, 0.006);
}

TEST(DeltaStats, OutliersEqualStrictFilter) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(1 + uniform_index(rng, 200));
        for (auto& x : v) x = static_cast<double>(uniform_index(rng, 7)) + (uniform_index(rng, 20) == 0 ? 30.0 : 0.0);
        const auto s = delta_stats(deltas_of(v));
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(v.size()));
        EXPECT_NEAR(s.stddev, sd, 1e-9);
        std::vector<TripletId> expected;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] > s.threshold) expected.push_back(from_index<TripletId>(i));
        }
        EXPECT_EQ(s.outliers, expected);
    }
}

TEST(Spearman, KnownValues) {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> up{2, 4, 6, 8, 10};
    const std::vector<double> down{5, 4, 3, 2, 1};
    const std::vector<double> flat{3, 3, 3, 3, 3};
    EXPECT_NEAR(spearman(x, up), 1.0, 1e-12);
    EXPECT_NEAR(spearman(x, down), -1.0, 1e-12);
    EXPECT_EQ(spearman(x, flat), 0.0);
    // Ties get average ranks: y ranks (1.5, 1.5, 3, 4, 5).
    const std::vector<double> tied{1, 1, 2, 3, 4};
    const double rx[] = {1, 2, 3, 4, 5};
    const double ry[] = {1.5, 1.5, 3, 4, 5};
    double mx = 3, my = 3, sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < 5; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    EXPECT_NEAR(spearman(x, tied), sxy / std::sqrt(sxx * syy), 1e-12);
}

TEST(RippleNetwork, SingleIterationAddsAtMostTwoEdges) {
    const RippleScenario s(1);
    const auto r = s.run(1);
    ASSERT_EQ(r.snapshots.size(), 2u);
    EXPECT_EQ(r.snapshots[0].edge_count(), 0u);
    EXPECT_LE(r.snapshots[1].edge_count(), 2u);
    ASSERT_EQ(r.most_affected.size(), 1u);
    ASSERT_EQ(r.most_affected[0].size(), 1u);
    const auto& hit = s.kg.triplet(r.most_affected[0][0]);
    const auto subject = s.stream[0].original.subject;
    for (auto [a, b] : r.snapshots[1].edges()) {
        EXPECT_TRUE(a == subject || b == subject);
        const auto other = a == subject ? b : a;
        EXPECT_TRUE(other == hit.subject || other == hit.object);
    }
}

TEST(RippleNetwork, TenIterationGolden) {
    const RippleScenario s(10);
    const auto r = s.run(2);
    ASSERT_EQ(r.snapshots.size(), 11u);
    EXPECT_EQ(r.snapshots[0].edge_count(), 0u);
    for (std::size_t i = 1; i < r.snapshots.size(); ++i) {
        EXPECT_GE(r.snapshots[i].edge_count(), r.snapshots[i - 1].edge_count());
    }
    for (const auto& g : r.snapshots) expect_degree_sums(g);
    std::ostringstream got;
    for (auto [a, b] : r.snapshots.back().edges()) got << to_index(a) << "-" << to_index(b) << " ";
    EXPECT_EQ(got.str(), "0-1 0-2 0-5 0-9 1-2 1-11 1-17 2-4 2-11 2-17 3-24 3-25 3-29 4-10 4-14 5-12 5-18 5-21 6-11 6-17 6-19 7-19 7-23 8-24 8-25 8-29 9-11 9-17 10-17 10-27 10-28 ");
}

TEST(RippleNetwork, ProjectedSimilarityGraphLinksSubjects) {
    const auto kg = fixtures::path_graph();
    SimilarityGraph sim;
    sim.node_count = kg.triplet_count();
    sim.edges.push_back({TripletId{0}, TripletId{3}, 0.9});
    const auto g = project_similarity_graph(sim, kg);
    // a-b and d-e: subj a, obj b, subj d, obj e.
    EXPECT_TRUE(g.has_edge(fixtures::entity(kg, "a"), fixtures::entity(kg, "d")));
    EXPECT_TRUE(g.has_edge(fixtures::entity(kg, "b"), fixtures::entity(kg, "d")));
    EXPECT_TRUE(g.has_edge(fixtures::entity(kg, "e"), fixtures::entity(kg, "a")));
    EXPECT_EQ(g.edge_count(), 3u);
    EXPECT_EQ(g.provenance(), GraphProvenance::GieNetwork);
}
