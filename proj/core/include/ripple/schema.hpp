#pragma once
// JSON-schema validation for run configs and report documents.

#include <string_view>

#include <nlohmann/json.hpp>

namespace ripple {

// Schema ids: "run_config", plus every report "kind" written by the pipeline
// (ripple_report, sir_outcome, delta_stats, ged_trace, degree_distributions,
// gie_selection, train_report, edit_report, prompts, edit_targets,
// ripple_stream, summary, manifest).
bool has_schema(std::string_view id);

// Throws ConfigError naming the failing keyword and JSON pointer.
void validate_against(const nlohmann::json& doc, std::string_view schema_id);

// Dispatches on doc["kind"].
void validate_document(const nlohmann::json& doc);

}  // namespace ripple
