#include "ripple/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "ripple/error.hpp"

namespace ripple {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json opt_hop(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

json header(const char* kind) { return json{{"schema", kSchemaVersion}, {"kind", kind}}; }

ReportStatus parse_status(const std::string& s) {
    if (s == "ok") return ReportStatus::Ok;
    if (s == "no_neighbors") return ReportStatus::NoNeighbors;
    if (s == "empty_selection") return ReportStatus::EmptySelection;
    throw ConfigError("unknown report status '" + s + "'");
}

}  // namespace

std::string format_g9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

json report_to_json(const RippleReport& r) {
    json j = header("ripple_report");
    j["evaluator"] = r.evaluator;
    j["metric"] = std::string(to_string(r.metric));
    j["status"] = std::string(to_string(r.status));
    j["edits"] = r.edits;
    j["mean_delta"] = opt(r.mean_delta);
    j["total_abs_delta"] = r.total_abs_delta;
    j["evaluated"] = r.evaluated;
    j["unevaluated"] = r.unevaluated;
    j["cost"] = {{"scoring_calls", r.scoring_calls}, {"embedding_calls", r.embedding_calls}};
    j["buckets"] = json::array();
    for (const auto& b : r.buckets) {
        j["buckets"].push_back(
            {{"label", b.label}, {"count", b.count}, {"mean_delta", b.mean_delta}, {"sum_abs_delta", b.sum_abs_delta}});
    }
    j["records"] = json::array();
    for (const auto& rec : r.records) {
        j["records"].push_back({{"id", to_index(rec.id)},
                                {"hop", opt_hop(rec.hop)},
                                {"pre", rec.pre},
                                {"post", rec.post},
                                {"delta", rec.delta},
                                {"similarity", opt(rec.similarity)}});
    }
    return j;
}

RippleReport report_from_json(const json& j) {
    if (j.value("kind", "") != "ripple_report") throw ConfigError("not a ripple report");
    RippleReport r;
    r.evaluator = j.at("evaluator").get<std::string>();
    r.metric = parse_metric_kind(j.at("metric").get<std::string>());
    r.status = parse_status(j.at("status").get<std::string>());
    r.edits = j.at("edits").get<std::vector<std::string>>();
    if (!j.at("mean_delta").is_null()) r.mean_delta = j.at("mean_delta").get<double>();
    r.total_abs_delta = j.at("total_abs_delta").get<double>();
    r.evaluated = j.at("evaluated").get<std::size_t>();
    r.unevaluated = j.at("unevaluated").get<std::size_t>();
    r.scoring_calls = j.at("cost").at("scoring_calls").get<std::size_t>();
    r.embedding_calls = j.at("cost").at("embedding_calls").get<std::size_t>();
    for (const auto& b : j.at("buckets")) {
        r.buckets.push_back({b.at("label").get<std::string>(), b.at("count").get<std::size_t>(),
                             b.at("mean_delta").get<double>(), b.at("sum_abs_delta").get<double>()});
    }
    for (const auto& rec : j.at("records")) {
        TripletRecord t;
        t.id = from_index<TripletId>(rec.at("id").get<std::size_t>());
        if (!rec.at("hop").is_null()) t.hop = rec.at("hop").get<int>();
        t.pre = rec.at("pre").get<double>();
        t.post = rec.at("post").get<double>();
        t.delta = rec.at("delta").get<double>();
        if (!rec.at("similarity").is_null()) t.similarity = rec.at("similarity").get<double>();
        r.records.push_back(t);
    }
    return r;
}

void write_report_csv(const RippleReport& r, std::ostream& out) {
    out << "id,hop,pre,post,delta,similarity\n";
    for (const auto& rec : r.records) {
        out << to_index(rec.id) << ',' << hop_bucket_label(rec.hop) << ',' << format_g9(rec.pre) << ','
            << format_g9(rec.post) << ',' << format_g9(rec.delta) << ','
            << (rec.similarity ? format_g9(*rec.similarity) : std::string()) << '\n';
    }
}

json selection_to_json(const SelectionResult& s) {
    json j = header("gie_selection");
    j["tau"] = s.tau;
    j["selected"] = json::array();
    for (std::size_t i = 0; i < s.selected.size(); ++i) {
        j["selected"].push_back(
            {{"id", to_index(s.selected[i])}, {"similarity", s.similarity[i]}, {"source_edit", s.source[i]}});
    }
    return j;
}

json sir_to_json(const SirOutcome& s, std::size_t k) {
    json j = header("sir_outcome");
    j["k"] = k;
    j["status"] = std::string(to_string(s.status));
    j["pool_size"] = s.pool_size;
    j["selected"] = json::array();
    for (std::size_t i = 0; i < s.selected.size(); ++i) {
        j["selected"].push_back({{"id", to_index(s.selected[i])}, {"delta", s.selected_deltas[i]}});
    }
    j["revision"] = {{"steps", s.revision_steps}, {"final_loss", s.revision_loss}};
    j["edit_ppl"] = {{"pre_edit", s.edit_ppl_pre}, {"post_edit", s.edit_ppl_post_edit}, {"post_sir", s.edit_ppl_post_sir}};
    j["selected_before"] = report_to_json(s.selected_before);
    j["selected_after"] = report_to_json(s.selected_after);
    j["full_before"] = report_to_json(s.full_before);
    j["full_after"] = report_to_json(s.full_after);
    return j;
}

json delta_stats_to_json(const DeltaStats& s, std::size_t n) {
    json j = header("delta_stats");
    j["count"] = n;
    j["mean"] = s.mean;
    j["stddev"] = s.stddev;
    j["threshold"] = s.threshold;
    j["outlier_count"] = s.outliers.size();
    j["outlier_fraction"] = s.outlier_fraction(n);
    j["outliers"] = json::array();
    for (auto id : s.outliers) j["outliers"].push_back(to_index(id));
    j["histogram"] = {{"edges", s.histogram.edges}, {"counts", s.histogram.counts}};
    return j;
}

void write_histogram_csv(const Histogram& h, std::ostream& out) {
    out << "bin,lo,hi,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        out << b << ',' << format_g9(h.edges[b]) << ',' << format_g9(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
    }
}

json ged_traces_to_json(const GedTrace& vs_gie, const GedTrace& vs_kg) {
    const auto trace = [](const GedTrace& t) {
        json a = json::array();
        for (const auto& r : t) a.push_back({{"iteration", r.iteration}, {"l1", r.l1}, {"ged", opt(r.ged)}});
        return a;
    };
    json j = header("ged_trace");
    j["vs_gie_network"] = trace(vs_gie);
    j["vs_vanilla_kg"] = trace(vs_kg);
    return j;
}

void write_ged_csv(const GedTrace& vs_gie, const GedTrace& vs_kg, std::ostream& out) {
    if (vs_gie.size() != vs_kg.size()) throw ConfigError("GED traces differ in length");
    const auto g = [](const std::optional<double>& v) { return v ? format_g9(*v) : std::string(); };
    out << "iteration,l1_gie,ged_gie,l1_kg,ged_kg\n";
    for (std::size_t i = 0; i < vs_gie.size(); ++i) {
        out << vs_gie[i].iteration << ',' << vs_gie[i].l1 << ',' << g(vs_gie[i].ged) << ',' << vs_kg[i].l1 << ','
            << g(vs_kg[i].ged) << '\n';
    }
}

json degree_distributions_to_json(const std::map<std::string, DegreeHistogram>& by_graph) {
    json j = header("degree_distributions");
    j["graphs"] = json::object();
    for (const auto& [name, hist] : by_graph) {
        json a = json::array();
        for (const auto& [deg, freq] : hist) a.push_back({{"degree", deg}, {"frequency", freq}});
        j["graphs"][name] = a;
    }
    return j;
}

void write_degree_csv(const std::map<std::string, DegreeHistogram>& by_graph, std::ostream& out) {
    out << "graph,degree,frequency\n";
    for (const auto& [name, hist] : by_graph) {
        for (const auto& [deg, freq] : hist) out << name << ',' << deg << ',' << freq << '\n';
    }
}

void write_text_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    body(out);
    if (!out) throw Error("error writing " + path.string());
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    write_text_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace ripple
