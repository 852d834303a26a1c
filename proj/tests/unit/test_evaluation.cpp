#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "ripple/error.hpp"
#include "ripple/evaluation.hpp"

using namespace ripple;

namespace {

std::vector<EditRequest> first_edits(const KnowledgeGraph& kg, std::size_t n) {
    std::vector<EditRequest> out;
    for (const auto& t : kg.triplets()) {
        if (out.size() == n) break;
        if (is_editable(kg, t)) out.push_back(make_edit_request(kg, t, 100 + to_index(t.id)));
    }
    return out;
}

struct Scenario {
    KnowledgeGraph kg;
    TemplateTable templates = TemplateTable::builtin();
    ModelSnapshot pre;
    std::vector<EditRequest> edits;
    ModelSnapshot post;

    Scenario(KnowledgeGraph g, std::size_t n_edits, std::size_t epochs = 20)
        : kg(std::move(g)),
          pre(fixtures::trained_model(kg, templates, epochs)),
          edits(first_edits(kg, n_edits)),
          post(apply_edits(pre, kg, templates, edits, EditEngineConfig{}).post) {}
};

const Scenario& shared() {
    static const Scenario s(fixtures::small_kg(), 2);
    return s;
}

// Straight-line R: mean over non-edited triplets of post PPL - pre PPL.
double brute_force_r(const Scenario& s) {
    std::set<TripletId> skip;
    for (const auto& e : s.edits) skip.insert(e.original.id);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : s.kg.triplets()) {
        if (skip.contains(t.id)) continue;
        const auto f = render_prompt(s.kg, s.templates, t, 0);
        sum += conditional_perplexity(s.post, f.prefix, f.sentence) - conditional_perplexity(s.pre, f.prefix, f.sentence);
        ++n;
    }
    return sum / static_cast<double>(n);
}

void expect_consistent(const RippleReport& r) {
    std::size_t count = 0;
    double weighted = 0.0;
    for (const auto& b : r.buckets) {
        count += b.count;
        weighted += b.mean_delta * static_cast<double>(b.count);
    }
    EXPECT_EQ(count, r.evaluated);
    EXPECT_EQ(r.records.size(), r.evaluated);
    EXPECT_EQ(r.scoring_calls, 2 * r.evaluated);
    if (r.evaluated > 0) {
        ASSERT_TRUE(r.mean_delta.has_value());
        EXPECT_NEAR(*r.mean_delta, weighted / static_cast<double>(count), 1e-12);
    }
    for (std::size_t i = 1; i < r.records.size(); ++i) EXPECT_LT(r.records[i - 1].id, r.records[i].id);
}

}  // namespace

TEST(EvalNaive, SameSnapshotIsZero) {
    const auto& s = shared();
    const auto r = eval_naive(s.pre, s.pre, s.kg, s.templates, s.edits);
    ASSERT_TRUE(r.mean_delta.has_value());
    EXPECT_EQ(*r.mean_delta, 0.0);
    for (const auto& b : r.buckets) EXPECT_EQ(b.mean_delta, 0.0);
    EXPECT_EQ(r.total_abs_delta, 0.0);
}

TEST(EvalNaive, MatchesBruteForceOnTwentyTriplets) {
    const Scenario s(fixtures::small_kg(8, 20, 12), 1);
    const auto r = eval_naive(s.pre, s.post, s.kg, s.templates, s.edits);
    EXPECT_NEAR(*r.mean_delta, brute_force_r(s), 1e-12);
    EXPECT_EQ(r.evaluated, 19u);
    EXPECT_EQ(r.scoring_calls, 2u * 19u);
    expect_consistent(r);
}

TEST(EvalNaive, ParallelEqualsSerial) {
    const auto& s = shared();
    EvalOptions many;
    many.jobs = 4;
    const auto a = eval_naive(s.pre, s.post, s.kg, s.templates, s.edits);
    const auto b = eval_naive(s.pre, s.post, s.kg, s.templates, s.edits, many);
    EXPECT_EQ(*a.mean_delta, *b.mean_delta);
    for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].delta, b.records[i].delta);
}

TEST(EvalNaive, RejectsKgWithOnlyEditedTriplets) {
    KnowledgeGraphBuilder b;
    b.add("a", "next", "b");
    const auto kg = std::move(b).build();
    const auto tt = TemplateTable::builtin();
    const auto s = fixtures::trained_model(kg, tt, 1);
    const EditRequest e{kg.triplet(TripletId{0}), fixtures::entity(kg, "a")};
    EXPECT_THROW(eval_naive(s, s, kg, tt, std::vector{e}), ConfigError);
}

TEST(EvalVanilla, IsolatedComponentHasNoNeighbors) {
    KnowledgeGraphBuilder b;
    b.add("a", "next", "b");
    b.add("b", "next", "c");
    const auto isolated = b.add("x", "next", "y");
    const auto kg = std::move(b).build();
    const auto tt = TemplateTable::builtin();
    const auto s = fixtures::trained_model(kg, tt, 1);
    const std::vector<EditRequest> edits{{kg.triplet(isolated), fixtures::entity(kg, "b")}};
    const auto r = eval_vanilla(s, s, kg, tt, edits);
    EXPECT_EQ(r.status, ReportStatus::NoNeighbors);
    EXPECT_EQ(r.evaluated, 0u);
    EXPECT_FALSE(r.mean_delta.has_value());
    EXPECT_EQ(r.unevaluated, 2u);
    for (const auto& bucket : r.buckets) EXPECT_EQ(bucket.count, 0u);
}

TEST(EvalVanilla, PathGraphHopBuckets) {
    const auto kg = fixtures::path_graph();
    const auto tt = TemplateTable::builtin();
    const auto pre = fixtures::trained_model(kg, tt, 5);
    const std::vector<EditRequest> edits{{kg.triplet(TripletId{0}), fixtures::entity(kg, "d")}};
    const auto post = apply_edits(pre, kg, tt, edits, EditEngineConfig{}).post;
    const auto r = eval_vanilla(pre, post, kg, tt, edits);
    std::vector<std::string> labels;
    for (const auto& rec : r.records) labels.push_back(hop_bucket_label(rec.hop));
    // Triplets b-c, c-d, d-e at hops 1..3; e-f is beyond the limit.
    EXPECT_EQ(labels, (std::vector<std::string>{"1", "2", "3+"}));
    EXPECT_EQ(r.records.front().id, TripletId{1});
    EXPECT_EQ(r.unevaluated, 1u);
    const auto naive = eval_naive(pre, post, kg, tt, edits);
    EXPECT_LT(r.scoring_calls, naive.scoring_calls);
    expect_consistent(r);
}

TEST(EvalVanilla, SubsetOfNaive) {
    const auto& s = shared();
    const auto naive = eval_naive(s.pre, s.post, s.kg, s.templates, s.edits);
    for (int hop : {1, 2, 3}) {
        const auto v = eval_vanilla(s.pre, s.post, s.kg, s.templates, s.edits, {}, hop);
        std::set<TripletId> all;
        for (const auto& r : naive.records) all.insert(r.id);
        for (const auto& r : v.records) {
            EXPECT_TRUE(all.contains(r.id));
            ASSERT_TRUE(r.hop.has_value());
            EXPECT_LE(*r.hop, hop);
        }
        EXPECT_LE(v.scoring_calls, naive.scoring_calls);
        EXPECT_EQ(v.evaluated + v.unevaluated, naive.evaluated);
        expect_consistent(v);
    }
}

TEST(GieConfig, Validation) {
    GieConfig g;
    EXPECT_NO_THROW(g.validate());
    g.tau = 1.5;
    EXPECT_THROW(g.validate(), ConfigError);
}

TEST(GieSelect, MinusOneSelectsEverythingAndMatchesNaive) {
    const auto& s = shared();
    GieConfig g;
    g.tau = -1.0;
    const auto sel = gie_select(s.pre, s.kg, s.templates, s.edits, g);
    EXPECT_EQ(sel.selected.size(), s.kg.triplet_count() - s.edits.size());
    const auto gie = eval_gie(s.pre, s.post, s.kg, s.templates, s.edits, g);
    const auto naive = eval_naive(s.pre, s.post, s.kg, s.templates, s.edits);
    EXPECT_NEAR(*gie.mean_delta, *naive.mean_delta, 1e-12);
    EXPECT_EQ(gie.scoring_calls, naive.scoring_calls);
}

TEST(GieSelect, NearOneKeepsOnlyNearDuplicates) {
    const auto& s = shared();
    GieConfig g;
    g.tau = 1.0 - 1e-9;
    const auto sel = gie_select(s.pre, s.kg, s.templates, s.edits, g);
    for (double v : sel.similarity) EXPECT_GT(v, g.tau);
    g.tau = 1.0;
    EXPECT_TRUE(gie_select(s.pre, s.kg, s.templates, s.edits, g).selected.empty());
    const auto r = eval_gie(s.pre, s.post, s.kg, s.templates, s.edits, g);
    EXPECT_EQ(r.status, ReportStatus::EmptySelection);
    EXPECT_FALSE(r.mean_delta.has_value());
}

TEST(GieSelect, TauMonotoneAndExcludesTargets) {
    const auto& s = shared();
    std::set<TripletId> targets;
    for (const auto& e : s.edits) targets.insert(e.original.id);
    std::optional<std::vector<TripletId>> previous;
    for (double tau : {-0.5, 0.0, 0.2, 0.35, 0.5, 0.8, 0.95}) {
        GieConfig g;
        g.tau = tau;
        const auto sel = gie_select(s.pre, s.kg, s.templates, s.edits, g);
        EXPECT_TRUE(std::is_sorted(sel.selected.begin(), sel.selected.end()));
        EXPECT_EQ(std::adjacent_find(sel.selected.begin(), sel.selected.end()), sel.selected.end());
        for (std::size_t i = 0; i < sel.selected.size(); ++i) {
            EXPECT_FALSE(targets.contains(sel.selected[i]));
            EXPECT_GT(sel.similarity[i], tau);
        }
        if (previous) {
            EXPECT_TRUE(std::includes(previous->begin(), previous->end(), sel.selected.begin(), sel.selected.end()));
        }
        previous = sel.selected;
        const auto r = eval_gie(s.pre, s.post, s.kg, s.templates, s.edits, g);
        EXPECT_LE(r.scoring_calls, 2 * (s.kg.triplet_count() - s.edits.size()));
        expect_consistent(r);
    }
}

TEST(GieSelect, HandPlantedEmbeddingsMatchCosineOracle) {
    // Five triplets whose words get hand-set embedding rows.
    KnowledgeGraphBuilder b;
    b.add("p", "r", "q");
    b.add("p", "r2", "s");
    b.add("q", "r", "s");
    b.add("s", "r2", "q");
    b.add("t", "r", "p");
    const auto kg = std::move(b).build();
    const auto tt = TemplateTable::builtin();
    const auto corpus = fixtures::corpus_for(kg, tt);
    auto cfg = fixtures::tiny_config(3, 4, 2);
    auto params = LmParams::zeros(cfg.context, cfg.embed_dim, cfg.hidden_dim, corpus.vocab->size());
    for (Eigen::Index i = 0; i < params.embedding.rows(); ++i) {
        params.embedding.row(i) << std::cos(0.7 * static_cast<double>(i)), std::sin(1.3 * static_cast<double>(i)),
            0.1 * static_cast<double>(i % 3);
    }
    const ModelSnapshot pre(cfg, corpus.vocab, params, "planted");

    auto embed = [&](const std::string& text) {
        std::vector<double> v(3, 0.0);
        const auto ids = corpus.vocab->encode(text);
        for (std::size_t k = 1; k < ids.size(); ++k) {
            for (int j = 0; j < 3; ++j) v[j] += params.embedding(ids[k], j);
        }
        return v;
    };
    const std::vector<EditRequest> edits{{kg.triplet(TripletId{0}), fixtures::entity(kg, "s")}};
    const auto target = embed(corpus.facts[0].sentence);
    for (double tau : {-0.2, 0.3, 0.6, 0.9, 0.99}) {
        GieConfig g;
        g.tau = tau;
        const auto sel = gie_select(pre, kg, tt, edits, g);
        std::vector<TripletId> expected;
        for (std::size_t i = 1; i < corpus.facts.size(); ++i) {
            if (oracle::cosine(target, embed(corpus.facts[i].sentence)) > tau) expected.push_back(from_index<TripletId>(i));
        }
        EXPECT_EQ(sel.selected, expected) << "tau " << tau;
        for (std::size_t i = 0; i < sel.selected.size(); ++i) {
            EXPECT_NEAR(sel.similarity[i], oracle::cosine(target, embed(corpus.facts[to_index(sel.selected[i])].sentence)),
                        1e-12);
        }
    }
}

TEST(EvalGie, SameSnapshotIsZeroAndCostSeparate) {
    const auto& s = shared();
    const auto r = eval_gie(s.pre, s.pre, s.kg, s.templates, s.edits, GieConfig{});
    if (r.evaluated > 0) EXPECT_EQ(*r.mean_delta, 0.0);
    EXPECT_EQ(r.embedding_calls, s.kg.triplet_count());
    EXPECT_EQ(r.evaluated + r.unevaluated, s.kg.triplet_count() - s.edits.size());
    for (const auto& rec : r.records) EXPECT_EQ(rec.hop, 1);
}

TEST(RandomSubset, SizeSeedAndExclusion) {
    const auto& s = shared();
    const Evaluator ev(s.kg, s.templates);
    const auto a = ev.random_subset(s.pre, s.post, s.edits, 7, 99);
    const auto b = ev.random_subset(s.pre, s.post, s.edits, 7, 99);
    EXPECT_EQ(a.evaluated, 7u);
    for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].id, b.records[i].id);
    for (const auto& r : a.records) {
        for (const auto& e : s.edits) EXPECT_NE(r.id, e.original.id);
    }
    EXPECT_EQ(ev.random_subset(s.pre, s.post, s.edits, 10'000, 1).evaluated, s.kg.triplet_count() - s.edits.size());
    expect_consistent(a);
}

TEST(SimilarityGraph, EdgelessAboveMaxCosine) {
    const auto& s = shared();
    const Evaluator ev(s.kg, s.templates);
    const auto& rows = ev.embeddings(s.pre)->rows;
    const Eigen::MatrixXd gram = rows * rows.transpose();
    double max_off = -1.0;
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < gram.cols(); ++j) max_off = std::max(max_off, gram(i, j));
    }
    EXPECT_TRUE(ev.similarity_graph(s.pre, max_off).edges.empty());
    EXPECT_FALSE(ev.similarity_graph(s.pre, max_off - 1e-6).edges.empty());
}

TEST(SimilarityGraph, IdenticalPromptsFormTriangle) {
    EmbeddingTable t;
    t.rows = Eigen::MatrixXd(3, 2);
    t.rows << 0.6, 0.8, 0.6, 0.8, 0.6, 0.8;
    const auto g = build_similarity_graph(t, 0.5);
    ASSERT_EQ(g.edges.size(), 3u);
    for (const auto& e : g.edges) EXPECT_NEAR(e.weight, 1.0, 1e-12);
    const auto adj = g.adjacency();
    for (const auto& nbrs : adj) EXPECT_EQ(nbrs.size(), 2u);
}

TEST(SimilarityGraph, MatchesPairwiseOracle) {
    const Scenario s(fixtures::small_kg(5, 10, 8), 1, 3);
    const auto facts = render_all(s.kg, s.templates, 0);
    std::vector<std::vector<double>> vecs;
    for (const auto& f : facts) {
        const auto e = embed_prompt(s.pre, f.sentence);
        vecs.emplace_back(e.vector.data(), e.vector.data() + e.vector.size());
    }
    for (double tau : {-0.5, 0.0, 0.3, 0.7}) {
        const auto g = build_similarity_graph(s.pre, s.kg, s.templates, tau);
        std::vector<std::pair<TripletId, TripletId>> expected;
        for (std::size_t i = 0; i < vecs.size(); ++i) {
            for (std::size_t j = i + 1; j < vecs.size(); ++j) {
                if (oracle::cosine(vecs[i], vecs[j]) > tau) expected.emplace_back(from_index<TripletId>(i), from_index<TripletId>(j));
            }
        }
        std::vector<std::pair<TripletId, TripletId>> got;
        for (const auto& e : g.edges) {
            EXPECT_LT(e.a, e.b);
            EXPECT_GT(e.weight, tau);
            got.emplace_back(e.a, e.b);
        }
        EXPECT_EQ(got, expected) << "tau " << tau;
    }
}

TEST(ParallelFor, VisitsEachIndexOnce) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i] += 1; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 1000);
}
