#include "ripple/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "ripple/analysis.hpp"
#include "ripple/config_json.hpp"
#include "ripple/error.hpp"
#include "ripple/report_io.hpp"
#include "ripple/rng.hpp"
#include "ripple/schema.hpp"

#ifndef RIPPLE_VERSION
#define RIPPLE_VERSION "dev"
#endif

namespace ripple {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kEvaluators[] = {"naive", "vanilla", "gie", "random"};

json header(const char* kind) { return json{{"schema", kSchemaVersion}, {"kind", kind}}; }

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

fs::path resolve(const fs::path& p, const fs::path& base_dir) {
    if (p.is_absolute() || base_dir.empty()) return p.lexically_normal();
    return (base_dir / p).lexically_normal();
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

fs::path cell_dir(const fs::path& out, const std::string& cell) { return out / "cells" / cell; }

std::string report_file(const char* evaluator, MetricKind m) {
    return std::string(evaluator) + "_" + std::string(to_string(m));
}

// ---- manifest ------------------------------------------------------------

struct StageClock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void write_manifest(const fs::path& out, const std::string& config_hash, const std::string& stage, double seconds,
                    const std::map<std::string, std::string>& set_errors, const std::vector<std::string>& clear_errors) {
    const auto path = out / "manifest.json";
    json stages = json::object();
    json errors = json::object();
    if (fs::exists(path)) {
        const auto old = read_json_file(path);
        if (old.contains("stages")) stages = old["stages"];
        if (old.contains("cell_errors")) errors = old["cell_errors"];
    }
    for (const auto& c : clear_errors) errors.erase(c);
    for (const auto& [c, msg] : set_errors) errors[c] = msg;
    stages[stage] = seconds;

    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), out);
        if (rel == "manifest.json") continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

    json j = header("manifest");
    j["tool_version"] = std::string(tool_version());
    j["config_hash"] = config_hash;
    j["files"] = json::array();
    for (const auto& f : files) {
        j["files"].push_back(
            {{"path", f.generic_string()}, {"sha256", sha256_file(out / f)}, {"bytes", fs::file_size(out / f)}});
    }
    j["stages"] = stages;
    j["cell_errors"] = errors;
    write_json_file(j, path);
}

std::map<std::string, std::string> manifest_errors(const fs::path& out) {
    std::map<std::string, std::string> errors;
    const auto path = out / "manifest.json";
    if (!fs::exists(path)) return errors;
    const auto j = read_json_file(path);
    if (auto it = j.find("cell_errors"); it != j.end()) {
        for (const auto& [k, v] : it->items()) errors[k] = v.get<std::string>();
    }
    return errors;
}

// The run directory must have been initialised with the same config.
void require_same_config(const RunConfig& config, const fs::path& out) {
    const auto path = out / "config.json";
    if (!fs::exists(path)) throw Error(out.string() + " has no config.json; run build-dataset first");
    const auto stored = RunConfig::from_json(read_json_file(path), out);
    if (stored.hash() != config.hash()) {
        throw ConfigError("config differs from the one used to build " + out.string());
    }
}

// ---- dataset ---------------------------------------------------------------

KnowledgeGraph build_kg(const RunConfig& config) {
    KnowledgeGraph kg;
    if (config.kg_tsv) {
        kg = load_tsv(*config.kg_tsv);
    } else {
        auto spec = config.synthetic;
        spec.seed = config.seed;
        kg = generate_synthetic_kg(spec);
    }
    if (config.subgraph_budget) {
        if (kg.entity_count() == 0) throw ConfigError("cannot sample a subgraph of an empty KG");
        Rng rng(config.sub_seed("subgraph-seed"));
        const auto seed_entity = from_index<EntityId>(uniform_index(rng, kg.entity_count()));
        kg = bfs_sample(kg, seed_entity, *config.subgraph_budget, config.sub_seed("subgraph"));
    }
    if (kg.empty()) throw ConfigError("knowledge graph has no triplets");
    return kg;
}

TemplateTable build_templates(const RunConfig& config) {
    json table = TemplateTable::builtin().to_json();
    if (config.templates) {
        const auto extra = read_json_file(*config.templates);
        if (!extra.is_object()) throw ConfigError(config.templates->string() + ": template table must be an object");
        for (const auto& [relation, list] : extra.items()) table[relation] = list;
    }
    return TemplateTable::from_json(table, config.allow_fallback);
}

json edit_json(const KnowledgeGraph& kg, const EditRequest& e) {
    return {{"triplet", to_index(e.original.id)},
            {"subject", kg.entity_name(e.original.subject)},
            {"relation", kg.relation_name(e.original.relation)},
            {"object", kg.entity_name(e.original.object)},
            {"new_object", kg.entity_name(e.new_object)}};
}

struct CellTargets {
    CellSpec spec;
    std::vector<EditRequest> edits;
    std::optional<std::string> error;
};

std::vector<CellTargets> load_targets(const fs::path& out, const KnowledgeGraph& kg) {
    const auto j = read_json_file(out / "dataset" / "edit_targets.json");
    std::vector<CellTargets> cells;
    for (const auto& c : j.at("cells")) {
        CellTargets t;
        t.spec.distribution = parse_target_distribution(c.at("distribution").get<std::string>());
        t.spec.count = c.at("count").get<std::size_t>();
        if (auto it = c.find("error"); it != c.end()) {
            t.error = it->get<std::string>();
        } else {
            for (const auto& e : c.at("edits")) {
                const auto id = e.at("triplet").get<std::size_t>();
                if (id >= kg.triplet_count()) throw ConfigError("edit target id out of range");
                const auto o = kg.find_entity(e.at("new_object").get<std::string>());
                if (!o) throw ConfigError("unknown counterfactual object in edit targets");
                t.edits.push_back({kg.triplet(from_index<TripletId>(id)), *o});
            }
        }
        cells.push_back(std::move(t));
    }
    return cells;
}

ModelSnapshot load_base(const fs::path& out) { return load_snapshot(out / "model" / "base.snap"); }

// ---- summary -----------------------------------------------------------------

json report_brief(const json& r) {
    return {{"mean_delta", r.at("mean_delta")},
            {"total_abs_delta", r.at("total_abs_delta")},
            {"evaluated", r.at("evaluated")},
            {"scoring_calls", r.at("cost").at("scoring_calls")},
            {"embedding_calls", r.at("cost").at("embedding_calls")}};
}

json vec_mean(const json& a) {
    if (!a.is_array() || a.empty()) return nullptr;
    double s = 0.0;
    for (const auto& v : a) s += v.get<double>();
    return s / static_cast<double>(a.size());
}

json cell_summary(const fs::path& out, const RunConfig& config, const CellTargets& t,
                  const std::map<std::string, std::string>& errors) {
    const auto name = t.spec.name();
    json c{{"cell", name}, {"distribution", std::string(to_string(t.spec.distribution))}, {"count", t.spec.count}};
    std::optional<std::string> error = t.error;
    if (!error) {
        if (auto it = errors.find(name); it != errors.end()) error = it->second;
    }
    const auto dir = cell_dir(out, name);
    if (error || !fs::exists(dir / "edit.json")) {
        c["status"] = error ? "error" : "pending";
        if (error) c["error"] = *error;
        return c;
    }
    c["status"] = "ok";
    const auto edit = read_json_file(dir / "edit.json");
    c["edit"] = {{"success", edit.at("success")}, {"steps", edit.at("steps")},
                 {"final_mean_loss", edit.at("final_mean_loss")}};

    json metrics = json::object();
    for (auto m : config.metrics) {
        json per = json::object();
        for (const char* ev : kEvaluators) {
            const auto p = dir / (report_file(ev, m) + ".json");
            if (fs::exists(p)) per[ev] = report_brief(read_json_file(p));
        }
        if (!per.empty()) metrics[std::string(to_string(m))] = per;
    }
    if (!metrics.empty()) {
        c["metrics"] = metrics;
        const auto& first = metrics.begin().value();
        if (first.contains("naive") && first.contains("gie")) {
            const double naive = first["naive"]["scoring_calls"].get<double>();
            c["gie_cost_ratio"] = naive > 0 ? json(first["gie"]["scoring_calls"].get<double>() / naive) : json(nullptr);
        }
    }

    json sir = json::array();
    for (auto k : config.sir_k) {
        const auto p = dir / ("sir_k" + std::to_string(k) + ".json");
        if (!fs::exists(p)) continue;
        const auto s = read_json_file(p);
        const auto before = s["selected_before"]["mean_delta"];
        const auto after = s["selected_after"]["mean_delta"];
        json reduction = nullptr;
        if (before.is_number() && after.is_number() && before.get<double>() > 0) {
            reduction = (before.get<double>() - after.get<double>()) / before.get<double>();
        }
        sir.push_back({{"k", k},
                       {"status", s["status"]},
                       {"selected_mean_before", before},
                       {"selected_mean_after", after},
                       {"reduction", reduction},
                       {"full_mean_before", s["full_before"]["mean_delta"]},
                       {"full_mean_after", s["full_after"]["mean_delta"]},
                       {"edit_ppl_pre", vec_mean(s["edit_ppl"]["pre_edit"])},
                       {"edit_ppl_post_edit", vec_mean(s["edit_ppl"]["post_edit"])},
                       {"edit_ppl_post_sir", vec_mean(s["edit_ppl"]["post_sir"])}});
    }
    if (!sir.empty()) c["sir"] = sir;

    if (fs::exists(dir / "delta_stats.json")) {
        const auto d = read_json_file(dir / "delta_stats.json");
        c["delta_stats"] = {{"mean", d["mean"]}, {"stddev", d["stddev"]}, {"outlier_fraction", d["outlier_fraction"]}};
    }
    return c;
}

void write_summary_csv(const json& summary, std::ostream& out) {
    const auto num = [](const json& v) { return v.is_number() ? format_g9(v.get<double>()) : std::string(); };
    out << "cell,status,metric,evaluator,mean_delta,total_abs_delta,evaluated,scoring_calls,embedding_calls\n";
    for (const auto& c : summary["cells"]) {
        const auto cell = c["cell"].get<std::string>();
        const auto status = c["status"].get<std::string>();
        if (!c.contains("metrics")) {
            out << cell << ',' << status << ",,,,,,,\n";
            continue;
        }
        for (const auto& [metric, per] : c["metrics"].items()) {
            for (const char* ev : kEvaluators) {
                if (!per.contains(ev)) continue;
                const auto& r = per[ev];
                out << cell << ',' << status << ',' << metric << ',' << ev << ',' << num(r["mean_delta"]) << ','
                    << num(r["total_abs_delta"]) << ',' << r["evaluated"].get<std::size_t>() << ','
                    << r["scoring_calls"].get<std::size_t>() << ',' << r["embedding_calls"].get<std::size_t>()
                    << '\n';
            }
        }
    }
}

Histogram histogram_from_json(const json& j) {
    Histogram h;
    h.edges = j.at("edges").get<std::vector<double>>();
    h.counts = j.at("counts").get<std::vector<std::size_t>>();
    if (h.edges.size() != h.counts.size() + 1) throw ConfigError("histogram edges/counts mismatch");
    return h;
}

GedTrace trace_from_json(const json& a) {
    GedTrace t;
    for (const auto& r : a) {
        GedRecord g;
        g.iteration = r.at("iteration").get<std::size_t>();
        g.l1 = r.at("l1").get<std::size_t>();
        if (!r.at("ged").is_null()) g.ged = r.at("ged").get<double>();
        t.push_back(g);
    }
    return t;
}

std::optional<double> trace_spearman(const GedTrace& t) {
    std::vector<double> x, y;
    for (const auto& r : t) {
        if (!r.ged) continue;
        x.push_back(static_cast<double>(r.iteration));
        y.push_back(*r.ged);
    }
    if (x.size() < 2) return std::nullopt;
    return spearman(x, y);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

// ---- config ----------------------------------------------------------------

std::string_view to_string(TargetDistribution d) { return d == TargetDistribution::Bfs ? "bfs" : "random"; }

TargetDistribution parse_target_distribution(std::string_view s) {
    if (s == "bfs") return TargetDistribution::Bfs;
    if (s == "random") return TargetDistribution::Random;
    throw ConfigError("unknown target distribution '" + std::string(s) + "'");
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
    validate_against(j, "run_config");
    RunConfig c;
    read_opt(j, "seed", c.seed);

    if (auto d = j.find("dataset"); d != j.end()) {
        if (auto it = d->find("kg_tsv"); it != d->end() && !it->is_null()) {
            c.kg_tsv = resolve(it->get<std::string>(), base_dir);
        }
        if (auto it = d->find("templates"); it != d->end() && !it->is_null()) {
            c.templates = resolve(it->get<std::string>(), base_dir);
        }
        read_opt(*d, "allow_fallback", c.allow_fallback);
        if (auto s = d->find("synthetic"); s != d->end()) {
            read_opt(*s, "entities", c.synthetic.entities);
            read_opt(*s, "relations", c.synthetic.relations);
            read_opt(*s, "triplets", c.synthetic.triplets);
        }
        if (auto it = d->find("subgraph_budget"); it != d->end() && !it->is_null()) {
            c.subgraph_budget = it->get<std::size_t>();
        }
    }
    if (auto l = j.find("lm"); l != j.end()) {
        ripple::from_json(*l, c.lm);
        read_opt(*l, "memorization_ppl", c.memorization_ppl);
    }
    if (auto e = j.find("editor"); e != j.end()) ripple::from_json(*e, c.editor);
    if (auto g = j.find("gie"); g != j.end()) ripple::from_json(*g, c.gie);
    if (auto s = j.find("sir"); s != j.end()) {
        read_opt(*s, "k_values", c.sir_k);
        if (auto it = s->find("pool"); it != s->end()) c.sir_pool = parse_candidate_pool(it->get<std::string>());
        if (auto it = s->find("ranking_metric"); it != s->end()) {
            c.sir_ranking = parse_metric_kind(it->get<std::string>());
        }
        if (auto it = s->find("revision"); it != s->end()) ripple::from_json(*it, c.revision);
    }
    if (auto s = j.find("sweep"); s != j.end()) {
        read_opt(*s, "edit_counts", c.edit_counts);
        if (auto it = s->find("distributions"); it != s->end()) {
            c.distributions.clear();
            for (const auto& d : *it) c.distributions.push_back(parse_target_distribution(d.get<std::string>()));
        }
    }
    if (auto e = j.find("evaluation"); e != j.end()) {
        if (auto it = e->find("metrics"); it != e->end()) {
            c.metrics.clear();
            for (const auto& m : *it) c.metrics.push_back(parse_metric_kind(m.get<std::string>()));
        }
        read_opt(*e, "gen_len", c.gen_len);
        if (auto it = e->find("ppl_scope"); it != e->end()) c.ppl_scope = parse_ppl_scope(it->get<std::string>());
        read_opt(*e, "vanilla_max_hop", c.vanilla_max_hop);
    }
    if (auto a = j.find("analysis"); a != j.end()) {
        read_opt(*a, "ripple_iterations", c.ripple_iterations);
        read_opt(*a, "top_m", c.ripple_top_m);
        if (auto it = a->find("distribution"); it != a->end()) {
            c.ripple_distribution = parse_target_distribution(it->get<std::string>());
        }
    }
    read_opt(j, "sanity_null", c.sanity_null);

    c.lm.validate();
    c.editor.validate();
    c.revision.validate();
    c.gie.validate();
    return c;
}

json RunConfig::to_json() const {
    const auto engine = [](const EditEngineConfig& e) {
        json j = e;
        j.erase("seed");
        return j;
    };
    json lm_json = lm;
    lm_json.erase("seed");
    lm_json.erase("early_stop_loss");
    lm_json["memorization_ppl"] = memorization_ppl;

    json dists = json::array();
    for (auto d : distributions) dists.push_back(std::string(to_string(d)));
    json metric_names = json::array();
    for (auto m : metrics) metric_names.push_back(std::string(to_string(m)));

    json j;
    j["seed"] = seed;
    j["dataset"] = {{"kg_tsv", kg_tsv ? json(kg_tsv->generic_string()) : json(nullptr)},
                    {"templates", templates ? json(templates->generic_string()) : json(nullptr)},
                    {"allow_fallback", allow_fallback},
                    {"synthetic",
                     {{"entities", synthetic.entities},
                      {"relations", synthetic.relations},
                      {"triplets", synthetic.triplets}}},
                    {"subgraph_budget", subgraph_budget ? json(*subgraph_budget) : json(nullptr)}};
    j["lm"] = lm_json;
    j["editor"] = engine(editor);
    j["gie"] = gie;
    j["sir"] = {{"k_values", sir_k},
                {"pool", std::string(to_string(sir_pool))},
                {"ranking_metric", std::string(to_string(sir_ranking))},
                {"revision", engine(revision)}};
    j["sweep"] = {{"edit_counts", edit_counts}, {"distributions", dists}};
    j["evaluation"] = {{"metrics", metric_names},
                       {"gen_len", gen_len},
                       {"ppl_scope", std::string(to_string(ppl_scope))},
                       {"vanilla_max_hop", vanilla_max_hop}};
    j["analysis"] = {{"ripple_iterations", ripple_iterations},
                     {"top_m", ripple_top_m},
                     {"distribution", std::string(to_string(ripple_distribution))}};
    j["sanity_null"] = sanity_null;
    return j;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

std::uint64_t RunConfig::sub_seed(std::string_view label) const { return derive_seed(seed, label); }

EvalOptions RunConfig::eval_options(MetricKind metric, unsigned jobs) const {
    EvalOptions o;
    o.metric.kind = metric;
    o.metric.gen_len = gen_len;
    o.metric.scope = ppl_scope;
    o.template_index = 0;
    o.jobs = jobs;
    return o;
}

EditEngineConfig RunConfig::editor_for(std::string_view cell) const {
    auto e = editor;
    e.seed = sub_seed("edit/" + std::string(cell));
    if (sanity_null) e.max_steps = 0;
    return e;
}

SirConfig RunConfig::sir_for(std::size_t k) const {
    SirConfig s;
    s.k = k;
    s.pool = sir_pool;
    s.gie = gie;
    s.revision = revision;
    s.revision.seed = sub_seed("sir/" + std::to_string(k));
    s.ranking_metric = sir_ranking;
    return s;
}

RunConfig load_run_config(const fs::path& path) {
    return RunConfig::from_json(read_json_file(path), path.parent_path());
}

std::string CellSpec::name() const { return std::string(to_string(distribution)) + "_" + std::to_string(count); }

std::vector<CellSpec> sweep_cells(const RunConfig& config) {
    std::vector<CellSpec> cells;
    for (auto d : config.distributions) {
        for (auto n : config.edit_counts) cells.push_back({d, n});
    }
    return cells;
}

std::vector<EditRequest> make_edit_stream(const KnowledgeGraph& kg, TargetDistribution dist, std::size_t n,
                                          std::uint64_t seed) {
    std::vector<EditRequest> out;
    if (n == 0) return out;
    if (kg.empty()) throw ConfigError("cannot draw edits from an empty KG");

    std::vector<Triplet> order;
    if (dist == TargetDistribution::Bfs) {
        Rng rng(derive_seed(seed, "seed-entity"));
        const auto start = from_index<EntityId>(uniform_index(rng, kg.entity_count()));
        for (auto id : bfs_order(kg, start, kg.triplet_count())) order.push_back(kg.triplet(id));
    } else {
        order = random_sample_targets(kg, kg.triplet_count(), derive_seed(seed, "permutation"));
    }
    for (const auto& t : order) {
        if (!is_editable(kg, t)) continue;
        out.push_back(make_edit_request(kg, t, derive_seed(seed, "counterfactual/" + std::to_string(to_index(t.id)))));
        if (out.size() == n) return out;
    }
    throw ConfigError("only " + std::to_string(out.size()) + " editable triplets available for a " +
                      std::string(to_string(dist)) + " stream of " + std::to_string(n) + " edits");
}

Dataset load_dataset(const fs::path& out) {
    bool allow_fallback = true;
    if (fs::exists(out / "config.json")) {
        const auto cfg = read_json_file(out / "config.json");
        if (auto d = cfg.find("dataset"); d != cfg.end()) read_opt(*d, "allow_fallback", allow_fallback);
    }
    auto kg = load_tsv(out / "dataset" / "kg.tsv");
    auto templates = TemplateTable::from_json(read_json_file(out / "dataset" / "templates.json"), allow_fallback);
    return {std::move(kg), std::move(templates)};
}

// ---- stages ----------------------------------------------------------------

void cmd_build_dataset(const RunConfig& config, const StageOptions& opts) {
    StageClock clock;
    fs::create_directories(opts.out / "dataset");
    write_json_file(config.to_json(), opts.out / "config.json");

    const auto kg = build_kg(config);
    const auto templates = build_templates(config);
    check_template_coverage(kg, templates);

    write_text_file(opts.out / "dataset" / "kg.tsv", [&](std::ostream& o) { write_tsv(kg, o); });
    write_json_file(templates.to_json(), opts.out / "dataset" / "templates.json");

    json prompts = header("prompts");
    prompts["facts"] = json::array();
    for (const auto& t : kg.triplets()) {
        json list = json::array();
        const auto n = templates.count(kg.relation_name(t.relation));
        for (std::size_t i = 0; i < n; ++i) {
            const auto f = render_prompt(kg, templates, t, i);
            list.push_back({{"prefix", f.prefix}, {"sentence", f.sentence}});
        }
        prompts["facts"].push_back({{"id", to_index(t.id)},
                                    {"subject", kg.entity_name(t.subject)},
                                    {"relation", kg.relation_name(t.relation)},
                                    {"object", kg.entity_name(t.object)},
                                    {"prompts", list}});
    }
    write_json_file(prompts, opts.out / "dataset" / "prompts.json");

    std::map<std::string, std::string> errors;
    std::vector<std::string> cleared;
    json targets = header("edit_targets");
    targets["cells"] = json::array();
    for (const auto& cell : sweep_cells(config)) {
        json c{{"cell", cell.name()}, {"distribution", std::string(to_string(cell.distribution))}, {"count", cell.count}};
        try {
            const auto seed = config.sub_seed("targets/" + std::string(to_string(cell.distribution)));
            json edits = json::array();
            for (const auto& e : make_edit_stream(kg, cell.distribution, cell.count, seed)) {
                edits.push_back(edit_json(kg, e));
            }
            c["edits"] = edits;
            cleared.push_back(cell.name());
        } catch (const ConfigError& e) {
            c["error"] = e.what();
            errors[cell.name()] = e.what();
        }
        targets["cells"].push_back(c);
    }
    write_json_file(targets, opts.out / "dataset" / "edit_targets.json");
    write_manifest(opts.out, config.hash(), "build_dataset", clock.seconds(), errors, cleared);
}

TrainReport cmd_train_base(const RunConfig& config, const StageOptions& opts) {
    StageClock clock;
    require_same_config(config, opts.out);
    const auto data = load_dataset(opts.out);
    const auto facts = render_all(data.kg, data.templates, 0);

    std::vector<std::string> texts;
    texts.reserve(facts.size());
    for (const auto& f : facts) texts.push_back(f.sentence);
    auto vocab = std::make_shared<const Vocab>(Vocab::build(texts, config.lm.vocab_cap));

    std::vector<Sequence> corpus;
    corpus.reserve(facts.size());
    for (const auto& f : facts) corpus.push_back(make_sequence(*vocab, f.sentence));

    LmConfig lm = config.lm;
    lm.seed = config.sub_seed("lm/shuffle");
    lm.early_stop_loss = 0.0;

    // Arithmetic mean of per-fact object-conditional PPL.
    const auto mean_object_ppl = [&](const LmParams& params) {
        const ModelSnapshot snap(lm, vocab, params, "monitor");
        std::vector<double> ppl(facts.size());
        parallel_for(facts.size(), opts.jobs,
                     [&](std::size_t i) { ppl[i] = conditional_perplexity(snap, facts[i].prefix, facts[i].sentence); });
        return mean_of(ppl);
    };

    double last_ppl = 0.0;
    auto result = train(LmParams::random(lm, vocab->size(), config.sub_seed("lm/init")), corpus, lm,
                        [&](std::size_t, const LmParams& p) {
                            last_ppl = mean_object_ppl(p);
                            return last_ppl <= config.memorization_ppl;
                        });
    if (result.epochs == 0) last_ppl = mean_object_ppl(result.params);

    TrainReport report;
    report.epochs = result.epochs;
    report.loss_trace = result.loss_trace;
    report.mean_object_ppl = last_ppl;
    report.reached_threshold = last_ppl <= config.memorization_ppl;
    report.status = report.reached_threshold ? "ok" : "warning";

    const ModelSnapshot base(lm, vocab, std::move(result.params), "base");
    save_snapshot(base, opts.out / "model" / "base.snap");

    json j = header("train_report");
    j["epochs"] = report.epochs;
    j["loss_trace"] = report.loss_trace;
    j["mean_object_ppl"] = report.mean_object_ppl;
    j["memorization_ppl"] = config.memorization_ppl;
    j["reached_threshold"] = report.reached_threshold;
    j["status"] = report.status;
    j["vocab_size"] = vocab->size();
    j["parameter_count"] = base.params().parameter_count();
    j["param_hash"] = hex64(base.param_hash());
    write_json_file(j, opts.out / "model" / "train_report.json");
    write_manifest(opts.out, config.hash(), "train_base", clock.seconds(), {}, {});
    return report;
}

void cmd_edit(const RunConfig& config, const StageOptions& opts) {
    StageClock clock;
    require_same_config(config, opts.out);
    const auto data = load_dataset(opts.out);
    const auto base = load_base(opts.out);

    std::map<std::string, std::string> errors;
    std::vector<std::string> cleared;
    for (const auto& cell : load_targets(opts.out, data.kg)) {
        const auto name = cell.spec.name();
        if (cell.error) {
            errors[name] = *cell.error;
            continue;
        }
        try {
            const auto engine_cfg = config.editor_for(name);
            const auto examples =
                counterfactual_examples(data.kg, data.templates, cell.edits, engine_cfg.template_index);
            const auto outcome = apply_edits(base, data.kg, data.templates, cell.edits, engine_cfg);

            json j = header("edit_report");
            j["cell"] = name;
            j["method"] = std::string(to_string(engine_cfg.method));
            j["edits"] = json::array();
            std::vector<double> ppl_pre, ppl_post;
            for (std::size_t i = 0; i < cell.edits.size(); ++i) {
                j["edits"].push_back({{"triplet", to_index(cell.edits[i].original.id)},
                                      {"description", describe_edit(data.kg, cell.edits[i])},
                                      {"prefix", examples[i].prefix},
                                      {"counterfactual", examples[i].sentence}});
                ppl_pre.push_back(conditional_perplexity(base, examples[i].prefix, examples[i].sentence));
                ppl_post.push_back(conditional_perplexity(outcome.post, examples[i].prefix, examples[i].sentence));
            }
            j["steps"] = outcome.steps;
            j["success"] = outcome.success;
            j["final_losses"] = outcome.final_losses;
            j["final_mean_loss"] = outcome.final_mean_loss;
            j["counterfactual_ppl"] = {{"pre_edit", ppl_pre}, {"post_edit", ppl_post}};
            j["sanity_null"] = config.sanity_null;
            j["param_hash"] = hex64(outcome.post.param_hash());
            save_snapshot(outcome.post, cell_dir(opts.out, name) / "post_edit.snap");
            write_json_file(j, cell_dir(opts.out, name) / "edit.json");
            cleared.push_back(name);
        } catch (const Error& e) {
            errors[name] = e.what();
        }
    }
    write_manifest(opts.out, config.hash(), "edit", clock.seconds(), errors, cleared);
}

void cmd_evaluate(const RunConfig& config, const StageOptions& opts) {
    StageClock clock;
    require_same_config(config, opts.out);
    const auto data = load_dataset(opts.out);
    const auto base = load_base(opts.out);

    std::vector<std::unique_ptr<Evaluator>> evaluators;
    for (auto m : config.metrics) {
        evaluators.push_back(std::make_unique<Evaluator>(data.kg, data.templates, config.eval_options(m, opts.jobs)));
    }

    std::map<std::string, std::string> errors;
    for (const auto& cell : load_targets(opts.out, data.kg)) {
        const auto name = cell.spec.name();
        const auto dir = cell_dir(opts.out, name);
        if (cell.error || !fs::exists(dir / "edit.json")) continue;
        try {
            const auto post = load_snapshot(dir / "post_edit.snap", base.vocab().hash());
            write_json_file(selection_to_json(evaluators.front()->gie_select(base, cell.edits, config.gie)),
                            dir / "gie_selection.json");
            for (std::size_t mi = 0; mi < config.metrics.size(); ++mi) {
                const auto metric = config.metrics[mi];
                const auto& ev = *evaluators[mi];
                const auto gie = ev.gie(base, post, cell.edits, config.gie);
                const RippleReport reports[] = {
                    ev.naive(base, post, cell.edits),
                    ev.vanilla(base, post, cell.edits, config.vanilla_max_hop),
                    gie,
                    ev.random_subset(base, post, cell.edits, gie.evaluated,
                                     config.sub_seed("random/" + name + "/" + std::string(to_string(metric)))),
                };
                for (std::size_t i = 0; i < std::size(kEvaluators); ++i) {
                    const auto stem = report_file(kEvaluators[i], metric);
                    write_json_file(report_to_json(reports[i]), dir / (stem + ".json"));
                    write_text_file(dir / (stem + ".csv"), [&](std::ostream& o) { write_report_csv(reports[i], o); });
                }
            }
        } catch (const Error& e) {
            errors[name] = e.what();
        }
    }
    write_manifest(opts.out, config.hash(), "evaluate", clock.seconds(), errors, {});
}

void cmd_sir(const RunConfig& config, const StageOptions& opts) {
    StageClock clock;
    require_same_config(config, opts.out);
    const auto data = load_dataset(opts.out);
    const auto base = load_base(opts.out);
    const Evaluator ev(data.kg, data.templates, config.eval_options(config.sir_ranking, opts.jobs));

    std::map<std::string, std::string> errors;
    for (const auto& cell : load_targets(opts.out, data.kg)) {
        const auto name = cell.spec.name();
        const auto dir = cell_dir(opts.out, name);
        if (cell.error || !fs::exists(dir / "edit.json")) continue;
        try {
            const auto post = load_snapshot(dir / "post_edit.snap", base.vocab().hash());
            for (auto k : config.sir_k) {
                const auto outcome = revise(post, base, ev, data.templates, cell.edits, config.sir_for(k));
                const auto stem = "sir_k" + std::to_string(k);
                auto j = sir_to_json(outcome, k);
                if (outcome.post_sir) {
                    save_snapshot(*outcome.post_sir, dir / ("post_" + stem + ".snap"));
                    j["post_sir_snapshot"] = "post_" + stem + ".snap";
                } else {
                    j["post_sir_snapshot"] = nullptr;
                }
                write_json_file(j, dir / (stem + ".json"));
            }
        } catch (const Error& e) {
            errors[name] = e.what();
        }
    }
    write_manifest(opts.out, config.hash(), "sir", clock.seconds(), errors, {});
}

void cmd_analyze(const RunConfig& config, const StageOptions& opts) {
    StageClock clock;
    require_same_config(config, opts.out);
    const auto data = load_dataset(opts.out);
    const auto base = load_base(opts.out);
    const auto& kg = data.kg;

    // Delta distribution per cell, from the naive report of the first metric.
    for (const auto& cell : load_targets(opts.out, kg)) {
        const auto dir = cell_dir(opts.out, cell.spec.name());
        const auto path = dir / (report_file("naive", config.metrics.front()) + ".json");
        if (cell.error || !fs::exists(path)) continue;
        const auto report = report_from_json(read_json_file(path));
        const auto deltas = report.deltas();
        if (deltas.empty()) continue;
        const auto stats = delta_stats(deltas);
        write_json_file(delta_stats_to_json(stats, deltas.size()), dir / "delta_stats.json");
        write_text_file(dir / "delta_hist.csv", [&](std::ostream& o) { write_histogram_csv(stats.histogram, o); });
    }

    const auto adir = opts.out / "analysis";
    const Evaluator ev(kg, data.templates, config.eval_options(MetricKind::PPL, opts.jobs));
    const auto vanilla = entity_graph_from_kg(kg);
    const auto gie_net = project_similarity_graph(ev.similarity_graph(base, config.gie.tau), kg);

    const auto stream =
        make_edit_stream(kg, config.ripple_distribution, config.ripple_iterations, config.sub_seed("ripple-stream"));
    const auto engine = make_engine(config.editor_for("ripple"));
    const auto net = build_ripple_network(base, ev, data.templates, stream, *engine, config.ripple_top_m);
    const auto& ripple = net.snapshots.back();

    const std::pair<const char*, const EntityGraph*> graphs[] = {
        {"vanilla_kg", &vanilla}, {"gie_network", &gie_net}, {"ripple_network", &ripple}};
    std::map<std::string, DegreeHistogram> degrees;
    for (const auto& [name, g] : graphs) {
        write_text_file(adir / (std::string(name) + ".tsv"), [&](std::ostream& o) { g->write_tsv(kg, o); });
        degrees[name] = degree_distribution(*g);
    }
    write_json_file(degree_distributions_to_json(degrees), adir / "degree_distributions.json");
    write_text_file(adir / "degree_distributions.csv", [&](std::ostream& o) { write_degree_csv(degrees, o); });

    const auto [vs_gie, vs_kg] = ged_trace(net.snapshots, gie_net, vanilla);
    auto ged_json = ged_traces_to_json(vs_gie, vs_kg);
    ged_json["spearman"] = {{"vs_gie_network", opt_json(trace_spearman(vs_gie))},
                            {"vs_vanilla_kg", opt_json(trace_spearman(vs_kg))}};
    write_json_file(ged_json, adir / "ged_trace.json");
    write_text_file(adir / "ged_trace.csv", [&](std::ostream& o) { write_ged_csv(vs_gie, vs_kg, o); });

    json js = header("ripple_stream");
    js["top_m"] = config.ripple_top_m;
    js["distribution"] = std::string(to_string(config.ripple_distribution));
    js["iterations"] = json::array();
    write_text_file(adir / "ripple_edges.csv", [&](std::ostream& o) {
        o << "iteration,entity_a,entity_b\n";
        for (std::size_t i = 0; i < stream.size(); ++i) {
            const auto& before = net.snapshots[i];
            const auto& after = net.snapshots[i + 1];
            for (const auto& [a, b] : after.edges()) {
                if (!before.has_edge(a, b)) o << i + 1 << ',' << kg.entity_name(a) << ',' << kg.entity_name(b) << '\n';
            }
            json affected = json::array();
            for (auto id : net.most_affected[i]) affected.push_back(to_index(id));
            js["iterations"].push_back({{"iteration", i + 1},
                                        {"edit", describe_edit(kg, stream[i])},
                                        {"edit_success", static_cast<bool>(net.edit_success[i])},
                                        {"most_affected", affected},
                                        {"edge_count", after.edge_count()}});
        }
    });
    write_json_file(js, adir / "ripple_stream.json");
    write_manifest(opts.out, config.hash(), "analyze", clock.seconds(), {}, {});
}

void cmd_report(const StageOptions& opts) {
    StageClock clock;
    const auto& out = opts.out;
    const auto config = RunConfig::from_json(read_json_file(out / "config.json"), out);
    const auto kg = load_tsv(out / "dataset" / "kg.tsv");
    const auto errors = manifest_errors(out);

    json summary = header("summary");
    summary["config_hash"] = config.hash();
    summary["cells"] = json::array();
    for (const auto& cell : load_targets(out, kg)) {
        const auto dir = cell_dir(out, cell.spec.name());
        if (fs::exists(dir)) {
            for (const auto& e : fs::directory_iterator(dir)) {
                if (e.path().extension() != ".json") continue;
                const auto j = read_json_file(e.path());
                const auto kind = j.value("kind", "");
                if (kind == "ripple_report") {
                    const auto r = report_from_json(j);
                    write_text_file(fs::path(e.path()).replace_extension(".csv"),
                                    [&](std::ostream& o) { write_report_csv(r, o); });
                } else if (kind == "delta_stats") {
                    const auto h = histogram_from_json(j.at("histogram"));
                    write_text_file(dir / "delta_hist.csv", [&](std::ostream& o) { write_histogram_csv(h, o); });
                }
            }
        }
        summary["cells"].push_back(cell_summary(out, config, cell, errors));
    }

    const auto adir = out / "analysis";
    json analysis = json::object();
    if (fs::exists(adir / "ged_trace.json")) {
        const auto g = read_json_file(adir / "ged_trace.json");
        const auto vs_gie = trace_from_json(g.at("vs_gie_network"));
        const auto vs_kg = trace_from_json(g.at("vs_vanilla_kg"));
        write_text_file(adir / "ged_trace.csv", [&](std::ostream& o) { write_ged_csv(vs_gie, vs_kg, o); });
        analysis["ged_spearman"] = g.value("spearman", json::object());
        if (!vs_gie.empty()) {
            analysis["final_l1"] = {{"vs_gie_network", vs_gie.back().l1}, {"vs_vanilla_kg", vs_kg.back().l1}};
        }
    }
    if (fs::exists(adir / "degree_distributions.json")) {
        std::map<std::string, DegreeHistogram> degrees;
        for (const auto& [name, list] : read_json_file(adir / "degree_distributions.json").at("graphs").items()) {
            for (const auto& e : list) degrees[name][e.at("degree").get<std::size_t>()] = e.at("frequency").get<std::size_t>();
        }
        write_text_file(adir / "degree_distributions.csv", [&](std::ostream& o) { write_degree_csv(degrees, o); });
    }
    if (fs::exists(adir / "ripple_stream.json")) {
        const auto s = read_json_file(adir / "ripple_stream.json");
        std::size_t ok = 0;
        for (const auto& it : s.at("iterations")) ok += it.at("edit_success").get<bool>() ? 1 : 0;
        analysis["ripple_iterations"] = s.at("iterations").size();
        analysis["ripple_edit_successes"] = ok;
    }
    summary["analysis"] = analysis;
    write_json_file(summary, out / "summary.json");
    write_text_file(out / "summary.csv", [&](std::ostream& o) { write_summary_csv(summary, o); });
    write_manifest(out, config.hash(), "report", clock.seconds(), {}, {});
}

// ---- checks ------------------------------------------------------------------

std::vector<CheckResult> check_run(const fs::path& out) {
    const auto config = RunConfig::from_json(read_json_file(out / "config.json"), out);
    if (!fs::exists(out / "summary.json")) throw Error(out.string() + " has no summary.json; run report first");
    const auto summary = read_json_file(out / "summary.json");
    std::vector<CheckResult> results;
    const auto add = [&](std::string name, bool passed, std::string detail) {
        results.push_back({std::move(name), passed, std::move(detail)});
    };

    std::vector<json> ok_cells;
    for (const auto& c : summary.at("cells")) {
        if (c.at("status") == "ok" && c.contains("metrics")) ok_cells.push_back(c);
    }

    if (config.sanity_null) {
        std::size_t nonzero = 0, seen = 0;
        for (const auto& c : ok_cells) {
            for (const auto& [metric, per] : c.at("metrics").items()) {
                for (const auto& [ev, r] : per.items()) {
                    ++seen;
                    if (r.at("mean_delta").is_number() && r.at("mean_delta").get<double>() != 0.0) ++nonzero;
                }
            }
        }
        add("null_edit_zero_ripple", seen > 0 && nonzero == 0,
            std::to_string(nonzero) + " of " + std::to_string(seen) + " reports with nonzero mean delta");
        return results;
    }

    std::vector<json> single;
    for (const auto& c : ok_cells) {
        if (c.at("count") == 1) single.push_back(c);
    }
    if (single.empty()) {
        add("single_edit_cells", false, "no completed single-edit cell");
    }
    for (const auto& c : single) {
        const auto cell = c.at("cell").get<std::string>();
        const auto& per = c.at("metrics").begin().value();
        const double ratio = c.value("gie_cost_ratio", json(1.0)).is_number() ? c["gie_cost_ratio"].get<double>() : 1.0;
        add(cell + "/gie_cost", ratio <= 0.10, "gie/naive scoring calls = " + format_g9(ratio));

        const double g = per.at("gie").at("total_abs_delta").get<double>();
        const double r = per.at("random").at("total_abs_delta").get<double>();
        add(cell + "/gie_vs_random", g >= r, "sum|delta| gie " + format_g9(g) + " vs random " + format_g9(r));

        if (c.contains("sir")) {
            const auto& s = c["sir"].front();
            const bool reduced = s.at("reduction").is_number() && s["reduction"].get<double>() >= 0.5;
            const bool kept = s.at("edit_ppl_post_sir").is_number() && s.at("edit_ppl_pre").is_number() &&
                              s["edit_ppl_post_sir"].get<double>() < s["edit_ppl_pre"].get<double>();
            add(cell + "/sir_k" + std::to_string(s.at("k").get<std::size_t>()), reduced && kept,
                "reduction " + (s["reduction"].is_number() ? format_g9(s["reduction"].get<double>()) : "n/a") +
                    ", edit ppl pre " + (s["edit_ppl_pre"].is_number() ? format_g9(s["edit_ppl_pre"].get<double>()) : "n/a") +
                    " post-sir " + (s["edit_ppl_post_sir"].is_number() ? format_g9(s["edit_ppl_post_sir"].get<double>()) : "n/a"));
        }
    }
    for (const auto& c : ok_cells) {
        if (!c.contains("delta_stats")) continue;
        const double f = c["delta_stats"]["outlier_fraction"].get<double>();
        add(c.at("cell").get<std::string>() + "/outliers", f < 0.10, "outlier fraction " + format_g9(f));
    }
    const auto& analysis = summary.value("analysis", json::object());
    if (analysis.contains("ged_spearman")) {
        const auto& sp = analysis["ged_spearman"];
        const auto gie = sp.value("vs_gie_network", json(nullptr));
        const auto kg = sp.value("vs_vanilla_kg", json(nullptr));
        add("ged_trend", gie.is_number() && kg.is_number() && gie.get<double>() < 0 && kg.get<double>() > 0,
            "spearman vs gie " + (gie.is_number() ? format_g9(gie.get<double>()) : "n/a") + ", vs kg " +
                (kg.is_number() ? format_g9(kg.get<double>()) : "n/a"));
    }
    return results;
}

std::vector<CheckResult> cmd_run(const RunConfig& config, const StageOptions& opts, bool check) {
    cmd_build_dataset(config, opts);
    cmd_train_base(config, opts);
    cmd_edit(config, opts);
    cmd_evaluate(config, opts);
    cmd_sir(config, opts);
    cmd_analyze(config, opts);
    cmd_report(opts);
    if (!check) return {};
    return check_run(opts.out);
}

void validate_bundle(const fs::path& out) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            const auto j = read_json_file(f);
            if (f == out / "config.json") {
                validate_against(j, "run_config");
            } else if (f == out / "dataset" / "templates.json") {
                TemplateTable::from_json(j);
            } else {
                validate_document(j);
                if (j.value("kind", "") == "sir_outcome") {
                    for (const char* key : {"selected_before", "selected_after", "full_before", "full_after"}) {
                        validate_against(j.at(key), "ripple_report");
                    }
                }
            }
        } catch (const ConfigError& e) {
            throw ConfigError(fs::relative(f, out).generic_string() + ": " + e.what());
        }
    }
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed");
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        hex.push_back(digits[md[i] >> 4]);
        hex.push_back(digits[md[i] & 0xf]);
    }
    return hex;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

std::string_view tool_version() { return RIPPLE_VERSION; }

}  // namespace ripple
