#pragma once
// JSON and CSV renderings of evaluation, SIR and analysis results.
//
// Every JSON document carries {"schema": kSchemaVersion, "kind": ...}.
// CSV floats use "%.9g" so files are byte-stable across platforms.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "ripple/analysis.hpp"
#include "ripple/evaluation.hpp"
#include "ripple/sir.hpp"

namespace ripple {

inline constexpr const char* kSchemaVersion = "ripplelab/1";

std::string format_g9(double v);

nlohmann::json report_to_json(const RippleReport& r);
RippleReport report_from_json(const nlohmann::json& j);

// id, hop, pre, post, delta, similarity
void write_report_csv(const RippleReport& r, std::ostream& out);

nlohmann::json selection_to_json(const SelectionResult& s);

// Model snapshots are not embedded; the caller records their paths.
nlohmann::json sir_to_json(const SirOutcome& s, std::size_t k);

nlohmann::json delta_stats_to_json(const DeltaStats& s, std::size_t n);
// bin, lo, hi, count
void write_histogram_csv(const Histogram& h, std::ostream& out);

nlohmann::json ged_traces_to_json(const GedTrace& vs_gie, const GedTrace& vs_kg);
// iteration, l1_gie, ged_gie, l1_kg, ged_kg (ged empty when absent)
void write_ged_csv(const GedTrace& vs_gie, const GedTrace& vs_kg, std::ostream& out);

using DegreeHistogram = std::map<std::size_t, std::size_t>;
nlohmann::json degree_distributions_to_json(const std::map<std::string, DegreeHistogram>& by_graph);
// graph, degree, frequency
void write_degree_csv(const std::map<std::string, DegreeHistogram>& by_graph, std::ostream& out);

// Pretty-printed with a trailing newline.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

// Writes via a callback into a file, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body);

}  // namespace ripple
