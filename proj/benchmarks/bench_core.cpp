#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "ripple/evaluation.hpp"
#include "ripple/metrics.hpp"

using namespace ripple;

namespace {

struct Setup {
    KnowledgeGraph kg = fixtures::small_kg(3, 120, 80);
    TemplateTable templates = TemplateTable::builtin();
    fixtures::Corpus corpus = fixtures::corpus_for(kg, templates);
    ModelSnapshot pre = fixtures::trained_model(kg, templates, 5);
    Evaluator evaluator{kg, templates};
};

const Setup& setup() {
    static const Setup s;
    return s;
}

void BM_Forward(benchmark::State& state) {
    const auto& s = setup();
    const auto& seq = s.corpus.sequences.front();
    const std::size_t c = s.pre.config().context;
    std::span<const TokenId> ctx(seq.tokens.data(), std::min(c, seq.tokens.size()));
    for (auto _ : state) benchmark::DoNotOptimize(forward(s.pre.params(), ctx));
}
BENCHMARK(BM_Forward);

void BM_LossAndGrad(benchmark::State& state) {
    const auto& s = setup();
    const auto& seq = s.corpus.sequences.front();
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(s.pre.params(), seq));
}
BENCHMARK(BM_LossAndGrad);

void BM_ConditionalPerplexity(benchmark::State& state) {
    const auto& s = setup();
    const auto& f = s.corpus.facts.front();
    for (auto _ : state) benchmark::DoNotOptimize(conditional_perplexity(s.pre, f.prefix, f.sentence));
}
BENCHMARK(BM_ConditionalPerplexity);

void BM_NaiveEvaluation(benchmark::State& state) {
    const auto& s = setup();
    std::vector<EditRequest> edits;
    for (const auto& t : s.kg.triplets()) {
        if (is_editable(s.kg, t)) {
            edits.push_back(make_edit_request(s.kg, t, 4));
            break;
        }
    }
    for (auto _ : state) benchmark::DoNotOptimize(s.evaluator.naive(s.pre, s.pre, edits));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.kg.triplet_count()));
}
BENCHMARK(BM_NaiveEvaluation)->Unit(benchmark::kMillisecond);

void BM_SimilarityGraph(benchmark::State& state) {
    const auto& s = setup();
    for (auto _ : state) benchmark::DoNotOptimize(s.evaluator.similarity_graph(s.pre, 0.35));
}
BENCHMARK(BM_SimilarityGraph)->Unit(benchmark::kMillisecond);

void BM_Bleu4(benchmark::State& state) {
    const std::vector<std::string> pred{"paris", "is", "the", "capital", "of", "france"};
    const std::vector<std::string> ref{"paris", "is", "the", "capital", "city", "of", "france"};
    for (auto _ : state) benchmark::DoNotOptimize(bleu4(pred, ref));
}
BENCHMARK(BM_Bleu4);

}  // namespace
BENCHMARK_MAIN();
