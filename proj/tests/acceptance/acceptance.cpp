// Runs the acceptance criteria end to end and prints one PASS/FAIL line per
// criterion. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "ripple/analysis.hpp"
#include "ripple/editors.hpp"
#include "ripple/error.hpp"
#include "ripple/evaluation.hpp"
#include "ripple/metrics.hpp"
#include "ripple/pipeline.hpp"
#include "ripple/rng.hpp"
#include "ripple/sir.hpp"

using namespace ripple;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("missing " + p.string());
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

unsigned jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

const fs::path kWork = fs::current_path() / "acceptance_runs";

// ---- 1 ------------------------------------------------------------------

Outcome gradients() {
    Rng rng(derive_seed(1, "acceptance/gradients"));
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        LmConfig cfg;
        cfg.context = 2 + uniform_index(rng, 4);
        cfg.embed_dim = 2 + uniform_index(rng, 5);
        cfg.hidden_dim = 2 + uniform_index(rng, 6);
        const std::size_t vocab = 5 + uniform_index(rng, 8);
        auto p = LmParams::random(cfg, vocab, rng());
        const double scale = uniform_real(rng, 1.0, 10.0);
        p.for_each_block([&](double* d, long n) {
            for (long i = 0; i < n; ++i) d[i] = d[i] * scale + uniform_real(rng, -0.05, 0.05);
        });
        Sequence seq;
        seq.tokens.push_back(Vocab::kBos);
        const std::size_t len = 2 + uniform_index(rng, 6);
        for (std::size_t i = 0; i < len; ++i) seq.tokens.push_back(static_cast<TokenId>(uniform_index(rng, vocab)));
        seq.loss_from = 1 + uniform_index(rng, len);
        const auto analytic = loss_and_grad(p, seq);
        const auto numeric = oracle::finite_difference_grad(p, seq, 1e-4);
        worst = std::max(worst, oracle::max_relative_error(analytic.grad, numeric));
    }
    return {worst <= 1e-4, "worst relative error " + fmt(worst) + " over 20 configs"};
}

// ---- 2 ------------------------------------------------------------------

Outcome oracle_equivalence() {
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 10; ++k) {
        Rng rng(derive_seed(k, "acceptance/oracle-kg"));
        SyntheticSpec spec;
        spec.triplets = 10 + uniform_index(rng, 41);
        spec.entities = std::max<std::size_t>(6, spec.triplets / 2 + 1);
        spec.relations = 5;
        spec.seed = rng();
        const auto kg = generate_synthetic_kg(spec);
        const auto tt = TemplateTable::builtin();

        std::vector<std::string> texts;
        std::vector<Sequence> corpus;
        for (const auto& f : render_all(kg, tt, 0)) texts.push_back(f.sentence);
        auto vocab = std::make_shared<const Vocab>(Vocab::build(texts));
        for (const auto& t : texts) corpus.push_back(make_sequence(*vocab, t));
        LmConfig cfg;
        cfg.context = 3;
        cfg.embed_dim = 8;
        cfg.hidden_dim = 12;
        cfg.max_epochs = 10;
        cfg.batch_size = 8;
        cfg.seed = k;
        const ModelSnapshot pre(cfg, vocab, train(LmParams::random(cfg, vocab->size(), k), corpus, cfg).params, "pre");

        const auto edits = make_edit_stream(kg, TargetDistribution::Random, 1, k);
        EditEngineConfig ec;
        ec.max_steps = 30;
        const auto post = apply_edits(pre, kg, tt, edits, ec).post;
        const auto report = eval_naive(pre, post, kg, tt, edits);

        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& t : kg.triplets()) {
            if (t.id == edits[0].original.id) continue;
            const auto f = render_prompt(kg, tt, t, 0);
            sum += conditional_perplexity(post, f.prefix, f.sentence) - conditional_perplexity(pre, f.prefix, f.sentence);
            ++n;
        }
        worst = std::max(worst, std::abs(*report.mean_delta - sum / static_cast<double>(n)));
    }

    Rng rng(derive_seed(2, "acceptance/topk"));
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<MetricDelta> deltas(1 + uniform_index(rng, 200));
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            const double v = uniform_index(rng, 4) == 0 ? static_cast<double>(uniform_index(rng, 5)) : uniform_real(rng, -3, 3);
            deltas[i] = {from_index<TripletId>(i), 0.0, v, v};
        }
        const std::size_t k = 1 + uniform_index(rng, deltas.size() + 3);
        if (select_topk(deltas, k) != oracle::topk_by_sort(deltas, k)) ++mismatches;
    }
    return {worst <= 1e-12 && mismatches == 0,
            "max |R - brute force| " + fmt(worst) + " on 10 KGs; top-k mismatches " + std::to_string(mismatches) + "/100"};
}

// ---- 3 ------------------------------------------------------------------

Outcome zero_edit_null() {
    SyntheticSpec spec;
    spec.entities = 30;
    spec.relations = 5;
    spec.triplets = 60;
    const auto kg = generate_synthetic_kg(spec);
    const auto tt = TemplateTable::builtin();
    std::vector<std::string> texts;
    for (const auto& f : render_all(kg, tt, 0)) texts.push_back(f.sentence);
    auto vocab = std::make_shared<const Vocab>(Vocab::build(texts));
    LmConfig cfg;
    cfg.embed_dim = 8;
    cfg.hidden_dim = 12;
    const ModelSnapshot s(cfg, vocab, LmParams::random(cfg, vocab->size(), 3), "null");
    const auto edits = make_edit_stream(kg, TargetDistribution::Bfs, 3, 1);
    const Evaluator ev(kg, tt);
    GieConfig g;
    g.tau = 0.0;
    const auto naive = ev.naive(s, s, edits);
    const auto vanilla = ev.vanilla(s, s, edits);
    const auto gie = ev.gie(s, s, edits, g);
    const auto stats = delta_stats(naive.deltas());
    bool ok = true;
    std::string detail;
    for (const auto* r : {&naive, &vanilla, &gie}) {
        ok = ok && r->mean_delta && *r->mean_delta == 0.0 && r->evaluated > 0;
        detail += r->evaluator + " R=" + (r->mean_delta ? fmt(*r->mean_delta) : std::string("none")) + " ";
    }
    ok = ok && stats.stddev == 0.0 && stats.outliers.empty();
    return {ok, detail + "sigma=" + fmt(stats.stddev) + " outliers=" + std::to_string(stats.outliers.size())};
}

// ---- shared seeded run --------------------------------------------------

struct DefaultRun {
    fs::path out;
    RunConfig config;
    double seconds = 0.0;
};

const DefaultRun& default_run() {
    static const DefaultRun run = [] {
        DefaultRun r;
        r.out = kWork / "default";
        r.config = load_run_config(fs::path(RIPPLE_CONFIG_DIR) / "default.json");
        fs::remove_all(r.out);
        const auto t0 = std::chrono::steady_clock::now();
        cmd_run(r.config, {r.out, jobs()}, false);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("INFO default seeded run finished in %.1f s (%s)\n", r.seconds, r.out.string().c_str());
        return r;
    }();
    return run;
}

// ---- 4 ------------------------------------------------------------------

Outcome edit_efficacy() {
    const auto& run = default_run();
    const auto ds = load_dataset(run.out);
    const auto base = load_snapshot(run.out / "model" / "base.snap");
    if (ds.kg.entity_count() != 500 || ds.kg.triplet_count() != 2000) return {false, "unexpected KG size"};
    const auto edits = make_edit_stream(ds.kg, TargetDistribution::Random, 1, derive_seed(42, "acceptance/edit"));
    const auto cf = counterfactual_examples(ds.kg, ds.templates, edits, 0);
    const double before = conditional_perplexity(base, cf[0].prefix, cf[0].sentence);

    const auto ft = apply_edits(base, ds.kg, ds.templates, edits, run.config.editor);
    const double after = conditional_perplexity(ft.post, cf[0].prefix, cf[0].sentence);

    double worst_box = 0.0;
    for (auto mask : {ParamMask::output_only(), ParamMask::all()}) {
        auto cfg = run.config.editor;
        cfg.method = EditMethod::FT_L;
        cfg.epsilon = 5e-4;
        cfg.mask = mask;
        const auto ftl = apply_edits(base, ds.kg, ds.templates, edits, cfg);
        worst_box = std::max(worst_box, ftl.post.params().max_abs_diff(base.params()));
    }
    const bool ok = ft.final_mean_loss <= 0.03 && after < before && worst_box <= 5e-4;
    return {ok, "FT loss " + fmt(ft.final_mean_loss) + " in " + std::to_string(ft.steps) + " steps, counterfactual PPL " +
                    fmt(before) + " -> " + fmt(after) + ", FT+L max|dtheta| " + fmt(worst_box)};
}

// ---- 5 ------------------------------------------------------------------

Outcome ripple_dose_response() {
    const auto& run = default_run();
    const auto cells = run.out / "cells";
    const auto gie = read_json(cells / "bfs_1" / "gie_ppl.json");
    const auto evaluated = gie["evaluated"].get<double>();
    const double mean_abs = evaluated > 0 ? gie["total_abs_delta"].get<double>() / evaluated : 0.0;
    const double r1 = read_json(cells / "bfs_1" / "naive_ppl.json")["mean_delta"].get<double>();
    const double r10 = read_json(cells / "bfs_10" / "naive_ppl.json")["mean_delta"].get<double>();
    return {mean_abs > 0.0 && r10 >= r1,
            "GIE mean |delta| " + fmt(mean_abs) + " after one edit; naive R bfs_10 " + fmt(r10) + " vs bfs_1 " + fmt(r1)};
}

// ---- 6 ------------------------------------------------------------------

Outcome gie_efficiency() {
    const auto& run = default_run();
    const auto ds = load_dataset(run.out);
    const auto base = load_snapshot(run.out / "model" / "base.snap");
    const Evaluator ev(ds.kg, ds.templates, run.config.eval_options(MetricKind::PPL, jobs()));
    int passed = 0;
    std::string detail;
    for (int i = 0; i < 5; ++i) {
        const auto seed = derive_seed(run.config.seed, "acceptance/gie/" + std::to_string(i));
        const auto edits = make_edit_stream(ds.kg, TargetDistribution::Random, 1, seed);
        const auto post = apply_edits(base, ds.kg, ds.templates, edits, run.config.editor_for("gie-" + std::to_string(i))).post;
        const auto gie = ev.gie(base, post, edits, run.config.gie);
        const double naive_cost = 2.0 * static_cast<double>(ds.kg.triplet_count() - edits.size());
        const double ratio = static_cast<double>(gie.scoring_calls) / naive_cost;
        const auto random = ev.random_subset(base, post, edits, gie.evaluated, derive_seed(seed, "random"));
        const bool ok = gie.evaluated > 0 && ratio <= 0.10 && gie.total_abs_delta >= random.total_abs_delta;
        passed += ok ? 1 : 0;
        detail += "[cost " + fmt(ratio) + ", sum|d| " + fmt(gie.total_abs_delta) + " vs " + fmt(random.total_abs_delta) + "] ";
    }
    return {passed == 5, std::to_string(passed) + "/5 runs " + detail};
}

// ---- 7 ------------------------------------------------------------------

Outcome sir_repair() {
    const auto& run = default_run();
    const auto cell = run.out / "cells" / "bfs_1";
    const auto k5 = read_json(cell / "sir_k5.json");
    const double before = k5["selected_before"]["mean_delta"].get<double>();
    const double after = k5["selected_after"]["mean_delta"].get<double>();
    const double reduction = 1.0 - after / before;
    const auto& ppl = k5["edit_ppl"];
    bool kept = true;
    for (std::size_t i = 0; i < ppl["pre_edit"].size(); ++i) {
        kept = kept && ppl["post_sir"][i].get<double>() < ppl["pre_edit"][i].get<double>();
    }
    std::string k10 = "K=10 not run";
    if (fs::exists(cell / "sir_k10.json")) {
        const auto j = read_json(cell / "sir_k10.json");
        k10 = "K=10 selected reduction " +
              fmt(1.0 - j["selected_after"]["mean_delta"].get<double>() / j["selected_before"]["mean_delta"].get<double>()) +
              ", full-KG R " + fmt(j["full_before"]["mean_delta"].get<double>()) + " -> " +
              fmt(j["full_after"]["mean_delta"].get<double>()) + " (K=5: " +
              fmt(k5["full_after"]["mean_delta"].get<double>()) + ")";
    }
    return {before > 0 && reduction >= 0.5 && kept,
            "K=5 selected mean delta " + fmt(before) + " -> " + fmt(after) + " (reduction " + fmt(reduction) +
                "), edit PPL " + fmt(ppl["pre_edit"][0].get<double>()) + " -> post-SIR " +
                fmt(ppl["post_sir"][0].get<double>()) + "; " + k10};
}

// ---- 8 ------------------------------------------------------------------

Outcome outlier_scarcity() {
    const auto& run = default_run();
    const auto stats = read_json(run.out / "cells" / "bfs_1" / "delta_stats.json");
    const double fraction = stats["outlier_fraction"].get<double>();
    Rng rng(derive_seed(8, "acceptance/normal"));
    std::vector<MetricDelta> sample(10'000);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double v = standard_normal(rng);
        sample[i] = {from_index<TripletId>(i), 0.0, v, v};
    }
    const double normal = delta_stats(sample).outlier_fraction(sample.size());
    return {fraction < 0.10 && std::abs(normal - 0.0228) <= 0.006,
            "single-edit outlier fraction " + fmt(fraction) + "; standard-normal sample " + fmt(normal)};
}

// ---- 9 ------------------------------------------------------------------

Outcome ged_trend() {
    const auto& run = default_run();
    const auto trace = read_json(run.out / "analysis" / "ged_trace.json");
    const double vs_gie = trace["spearman"]["vs_gie_network"].get<double>();
    const double vs_kg = trace["spearman"]["vs_vanilla_kg"].get<double>();
    const auto iterations = trace["vs_gie_network"].size() - 1;
    return {iterations == 20 && vs_gie < 0.0 && vs_kg > 0.0,
            std::to_string(iterations) + " iterations; Spearman vs GIE network " + fmt(vs_gie) + ", vs KG " + fmt(vs_kg)};
}

// ---- 10 -----------------------------------------------------------------

Outcome metric_sanity() {
    const auto same = whitespace_tokens("one two three four five six seven eight nine ten");
    bool ok = bleu4(same, same) == 1.0 && rouge1_f(same, same) == 1.0 && rougeL_f(same, same) == 1.0;
    const double bleu = bleu4(whitespace_tokens("the cat sat"), whitespace_tokens("the cat sat down"));
    const double bleu_expected = std::exp(1.0 - 4.0 / 3.0);
    const double rl = rougeL_f(whitespace_tokens("a b c d"), whitespace_tokens("a c b d"));
    ok = ok && std::abs(bleu - bleu_expected) <= 1e-9 && std::abs(rl - 0.75) <= 1e-9;

    std::string text;
    for (int i = 0; i < 97; ++i) text += "w" + std::to_string(i) + " ";
    auto vocab = std::make_shared<const Vocab>(Vocab::build(std::vector<std::string>{text}));
    LmConfig cfg;
    const ModelSnapshot uniform(cfg, vocab, LmParams::zeros(cfg.context, cfg.embed_dim, cfg.hidden_dim, vocab->size()), "u");
    const double ppl = perplexity(uniform, "w3 w17 w42 w5");
    ok = ok && std::abs(ppl - static_cast<double>(vocab->size())) <= 1e-9;
    return {ok, "BLEU " + fmt(bleu) + " (expected " + fmt(bleu_expected) + "), ROUGE-L " + fmt(rl) + ", uniform PPL " +
                    fmt(ppl) + " for V=" + std::to_string(vocab->size())};
}

// ---- 11 -----------------------------------------------------------------

Outcome reproducibility() {
    const auto config = load_run_config(fs::path(RIPPLE_CONFIG_DIR) / "small.json");
    std::map<std::string, std::string> bundles[2];
    for (int i = 0; i < 2; ++i) {
        const auto out = kWork / ("repro_" + std::to_string(i));
        fs::remove_all(out);
        cmd_run(config, {out, i == 0 ? 1u : jobs()}, false);
        for (const auto& e : fs::recursive_directory_iterator(out)) {
            if (!e.is_regular_file()) continue;
            const auto rel = fs::relative(e.path(), out).generic_string();
            if (rel != "manifest.json") bundles[i][rel] = slurp(e.path());
        }
    }
    std::size_t differing = 0;
    for (const auto& [rel, bytes] : bundles[0]) {
        const auto it = bundles[1].find(rel);
        if (it == bundles[1].end() || it->second != bytes) ++differing;
    }
    const bool ok = bundles[0].size() == bundles[1].size() && differing == 0 && !bundles[0].empty();
    return {ok, std::to_string(bundles[0].size()) + " files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 gradient correctness", gradients},
        {"2 oracle equivalence", oracle_equivalence},
        {"3 zero-edit null", zero_edit_null},
        {"4 edit efficacy and FT+L box", edit_efficacy},
        {"5 ripple existence and dose-response", ripple_dose_response},
        {"6 GIE efficiency", gie_efficiency},
        {"7 SIR repair", sir_repair},
        {"8 outlier scarcity", outlier_scarcity},
        {"9 GED trend", ged_trend},
        {"10 metric sanity", metric_sanity},
        {"11 reproducibility", reproducibility},
    };
    fs::create_directories(kWork);
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %s: %s (%.1f s)\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.passed ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
