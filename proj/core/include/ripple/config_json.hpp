#pragma once
// JSON conversions for the configuration structs. Readers accept partial
// objects (missing keys keep their defaults); unknown keys are rejected by
// schema validation upstream, not here.

#include <nlohmann/json.hpp>

#include "ripple/editors.hpp"
#include "ripple/evaluation.hpp"
#include "ripple/metrics.hpp"
#include "ripple/sir.hpp"
#include "ripple/tinylm.hpp"

namespace ripple {

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

void to_json(nlohmann::json& j, const LmConfig& c);
void from_json(const nlohmann::json& j, LmConfig& c);

void to_json(nlohmann::json& j, const ParamMask& m);
void from_json(const nlohmann::json& j, ParamMask& m);

void to_json(nlohmann::json& j, const EditEngineConfig& c);
void from_json(const nlohmann::json& j, EditEngineConfig& c);

void to_json(nlohmann::json& j, const GieConfig& c);
void from_json(const nlohmann::json& j, GieConfig& c);

void to_json(nlohmann::json& j, const SirConfig& c);
void from_json(const nlohmann::json& j, SirConfig& c);

}  // namespace ripple
