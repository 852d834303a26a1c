// ripplelab: run the ripple-effect experiment pipeline stage by stage.
//
// Exit codes: 0 ok, 1 config error, 2 runtime error, 3 a `run --check` check failed.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "ripple/error.hpp"
#include "ripple/pipeline.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    unsigned jobs = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
    auto* opt = cmd->add_option("--config", c.config, "Run config JSON");
    if (needs_config) opt->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Override the global seed");
    cmd->add_option("--out", c.out, "Run directory")->capture_default_str();
    cmd->add_option("--jobs", c.jobs, "Worker threads (0 = hardware concurrency)");
}

ripple::RunConfig resolve_config(const Common& c) {
    ripple::RunConfig cfg;
    if (!c.config.empty()) {
        cfg = ripple::load_run_config(c.config);
    } else if (std::filesystem::exists(std::filesystem::path(c.out) / "config.json")) {
        cfg = ripple::load_run_config(std::filesystem::path(c.out) / "config.json");
    }
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

ripple::StageOptions stage_options(const Common& c) {
    ripple::StageOptions o;
    o.out = c.out;
    o.jobs = c.jobs != 0 ? c.jobs : std::max(1u, std::thread::hardware_concurrency());
    return o;
}

int print_checks(const std::vector<ripple::CheckResult>& checks) {
    bool ok = true;
    for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        ok = ok && c.passed;
    }
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ripple-effect experiments on a tiny language model"};
    app.set_version_flag("--version", std::string(ripple::tool_version()));
    app.require_subcommand(1);

    Common common;
    bool check = false;
    bool validate = false;

    struct Stage {
        const char* name;
        const char* help;
    };
    const Stage stages[] = {
        {"build-dataset", "Build the KG, prompts and edit targets"},
        {"train-base", "Train the base model until it memorizes the corpus"},
        {"edit", "Apply the edits of every sweep cell"},
        {"evaluate", "Run the naive, vanilla, GIE and random evaluators"},
        {"sir", "Run selective impact revision for each K"},
        {"analyze", "Delta statistics, ripple network, GED and degree distributions"},
    };
    std::map<std::string, CLI::App*> cmds;
    for (const auto& s : stages) {
        cmds[s.name] = app.add_subcommand(s.name, s.help);
        add_common(cmds[s.name], common, true);
    }
    auto* run = app.add_subcommand("run", "All stages in order");
    add_common(run, common, true);
    run->add_flag("--check", check, "Run the directional checks afterwards (exit 3 on failure)");
    auto* report = app.add_subcommand("report", "Re-render CSVs and the summary from the JSON reports");
    add_common(report, common, false);
    report->add_flag("--validate", validate, "Validate every JSON document against its schema");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto opts = stage_options(common);
        if (report->parsed()) {
            ripple::cmd_report(opts);
            if (validate) ripple::validate_bundle(opts.out);
            return 0;
        }
        const auto config = resolve_config(common);
        if (run->parsed()) {
            const auto checks = ripple::cmd_run(config, opts, check);
            return check ? print_checks(checks) : 0;
        }
        if (cmds["build-dataset"]->parsed()) ripple::cmd_build_dataset(config, opts);
        if (cmds["train-base"]->parsed()) {
            const auto r = ripple::cmd_train_base(config, opts);
            if (!r.reached_threshold) {
                std::cerr << "warning: mean object PPL " << r.mean_object_ppl << " above threshold after " << r.epochs
                          << " epochs\n";
            }
        }
        if (cmds["edit"]->parsed()) ripple::cmd_edit(config, opts);
        if (cmds["evaluate"]->parsed()) ripple::cmd_evaluate(config, opts);
        if (cmds["sir"]->parsed()) ripple::cmd_sir(config, opts);
        if (cmds["analyze"]->parsed()) ripple::cmd_analyze(config, opts);
        return 0;
    } catch (const ripple::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
