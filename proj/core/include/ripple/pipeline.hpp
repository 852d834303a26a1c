#pragma once
// End-to-end experiment orchestration behind the `ripplelab` CLI.
//
// Output layout under the run directory:
//   config.json                     resolved config
//   dataset/   kg.tsv prompts.json edit_targets.json templates.json
//   model/     base.snap train_report.json
//   cells/<dist>_<n>/               one sweep cell
//       edit.json post_edit.snap
//       <evaluator>_<metric>.json/.csv    naive, vanilla, gie, random
//       sir_k<K>.json post_sir_k<K>.snap
//       delta_stats.json delta_hist.csv
//   analysis/  ripple_stream.json ripple_edges.csv *.tsv ged_trace.* degree_distributions.*
//   summary.json summary.csv
//   manifest.json                   hashes + wall times (not byte-stable)

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ripple/editors.hpp"
#include "ripple/evaluation.hpp"
#include "ripple/kgstore.hpp"
#include "ripple/sir.hpp"
#include "ripple/templates.hpp"
#include "ripple/tinylm.hpp"

namespace ripple {

enum class TargetDistribution { Bfs, Random };
std::string_view to_string(TargetDistribution d);
TargetDistribution parse_target_distribution(std::string_view s);

struct RunConfig {
    std::uint64_t seed = 42;

    // dataset
    std::optional<std::filesystem::path> kg_tsv;     // synthetic KG when absent
    std::optional<std::filesystem::path> templates;  // merged over the built-in table
    bool allow_fallback = true;
    SyntheticSpec synthetic{};
    std::optional<std::size_t> subgraph_budget;      // BFS subgraph sampling of the source KG

    // base model
    LmConfig lm{};
    double memorization_ppl = 1.5;

    EditEngineConfig editor{};
    GieConfig gie{};

    std::vector<std::size_t> sir_k{5, 10};
    CandidatePool sir_pool = CandidatePool::GieSelected;
    MetricKind sir_ranking = MetricKind::PPL;
    EditEngineConfig revision{};

    std::vector<std::size_t> edit_counts{1, 2, 3, 5, 8, 10, 50, 200};
    std::vector<TargetDistribution> distributions{TargetDistribution::Bfs, TargetDistribution::Random};

    std::vector<MetricKind> metrics{MetricKind::PPL};
    std::size_t gen_len = 10;
    PplScope ppl_scope = PplScope::ObjectOnly;
    int vanilla_max_hop = 3;

    std::size_t ripple_iterations = 20;
    std::size_t ripple_top_m = 5;
    TargetDistribution ripple_distribution = TargetDistribution::Random;

    bool sanity_null = false;

    // Validates against the config schema (unknown keys rejected) and the
    // per-field invariants. Relative paths resolve against `base_dir`.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;

    // SHA-256 hex of the canonical JSON form.
    std::string hash() const;

    // Sub-seed for a named purpose, derived from `seed`.
    std::uint64_t sub_seed(std::string_view label) const;

    EvalOptions eval_options(MetricKind metric, unsigned jobs) const;
    EditEngineConfig editor_for(std::string_view cell) const;
    SirConfig sir_for(std::size_t k) const;
};

RunConfig load_run_config(const std::filesystem::path& path);

struct CellSpec {
    TargetDistribution distribution = TargetDistribution::Bfs;
    std::size_t count = 0;
    std::string name() const;  // e.g. "bfs_10"
};

std::vector<CellSpec> sweep_cells(const RunConfig& config);

// The first n editable triplets in BFS order from a seeded entity, or of a
// seeded permutation; each gets a seeded counterfactual object. Throws
// ConfigError when fewer than n triplets are editable.
std::vector<EditRequest> make_edit_stream(const KnowledgeGraph& kg, TargetDistribution dist, std::size_t n,
                                          std::uint64_t seed);

struct StageOptions {
    std::filesystem::path out;
    unsigned jobs = 1;
};

// Loaded dataset: the KG and its templates.
struct Dataset {
    KnowledgeGraph kg;
    TemplateTable templates;
};

Dataset load_dataset(const std::filesystem::path& out);

struct TrainReport {
    std::size_t epochs = 0;
    std::vector<double> loss_trace;
    double mean_object_ppl = 0.0;
    bool reached_threshold = false;
    std::string status;  // "ok" | "warning"
};

void cmd_build_dataset(const RunConfig& config, const StageOptions& opts);
TrainReport cmd_train_base(const RunConfig& config, const StageOptions& opts);
void cmd_edit(const RunConfig& config, const StageOptions& opts);
void cmd_evaluate(const RunConfig& config, const StageOptions& opts);
void cmd_sir(const RunConfig& config, const StageOptions& opts);
void cmd_analyze(const RunConfig& config, const StageOptions& opts);

// Re-renders every CSV and the summary from the JSON reports under `out`.
void cmd_report(const StageOptions& opts);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Directional checks on a finished run directory (see README).
std::vector<CheckResult> check_run(const std::filesystem::path& out);

// All stages in order. Returns the check results when `check` is set.
std::vector<CheckResult> cmd_run(const RunConfig& config, const StageOptions& opts, bool check);

// Validates every JSON document under `out` against its schema.
void validate_bundle(const std::filesystem::path& out);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string_view tool_version();

}  // namespace ripple
