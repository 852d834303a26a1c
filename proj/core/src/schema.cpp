#include "ripple/schema.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <rapidjson/document.h>
#include <rapidjson/pointer.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include "ripple/error.hpp"

namespace ripple {

namespace {

// Shared fragments are spliced in with string concatenation.
const std::string kAdam = R"({
  "type": "object", "additionalProperties": false,
  "properties": {
    "lr": {"type": "number", "minimum": 0},
    "beta1": {"type": "number", "minimum": 0, "maximum": 1, "exclusiveMaximum": true},
    "beta2": {"type": "number", "minimum": 0, "maximum": 1, "exclusiveMaximum": true},
    "eps": {"type": "number", "minimum": 0, "exclusiveMinimum": true}
  }
})";

const std::string kEngine = R"({
  "type": "object", "additionalProperties": false,
  "properties": {
    "method": {"enum": ["FT", "FT_L"]},
    "lr": {"type": "number", "minimum": 0},
    "early_stop_loss": {"type": "number", "minimum": 0, "exclusiveMinimum": true},
    "max_steps": {"type": "integer", "minimum": 0},
    "epsilon": {"type": "number", "minimum": 0, "exclusiveMinimum": true},
    "mask": {"type": "array", "minItems": 1, "uniqueItems": true,
             "items": {"enum": ["embedding", "hidden", "output"]}},
    "template_index": {"type": "integer", "minimum": 0}
  }
})";

const std::string kMetric = R"({"enum": ["ppl", "bleu4", "rouge1_f", "rougeL_f"]})";

const std::string kRunConfig = R"({
  "type": "object", "additionalProperties": false,
  "properties": {
    "seed": {"type": "integer", "minimum": 0},
    "dataset": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "kg_tsv": {"type": ["string", "null"]},
        "templates": {"type": ["string", "null"]},
        "allow_fallback": {"type": "boolean"},
        "synthetic": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "entities": {"type": "integer", "minimum": 2},
            "relations": {"type": "integer", "minimum": 1},
            "triplets": {"type": "integer", "minimum": 1}
          }
        },
        "subgraph_budget": {"type": ["integer", "null"], "minimum": 1}
      }
    },
    "lm": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "context": {"type": "integer", "minimum": 2},
        "embed_dim": {"type": "integer", "minimum": 1},
        "hidden_dim": {"type": "integer", "minimum": 1},
        "vocab_cap": {"type": "integer", "minimum": 0},
        "adam": )" + kAdam + R"(,
        "max_epochs": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "memorization_ppl": {"type": "number", "minimum": 1}
      }
    },
    "editor": )" + kEngine + R"(,
    "gie": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "tau": {"type": "number", "minimum": -1, "maximum": 1},
        "max_selected": {"type": ["integer", "null"], "minimum": 1}
      }
    },
    "sir": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "k_values": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "pool": {"enum": ["gie", "full_kg"]},
        "ranking_metric": )" + kMetric + R"(,
        "revision": )" + kEngine + R"(
      }
    },
    "sweep": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "edit_counts": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "distributions": {"type": "array", "minItems": 1, "uniqueItems": true, "items": {"enum": ["bfs", "random"]}}
      }
    },
    "evaluation": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "metrics": {"type": "array", "minItems": 1, "uniqueItems": true, "items": )" + kMetric + R"(},
        "gen_len": {"type": "integer", "minimum": 1},
        "ppl_scope": {"enum": ["full", "object"]},
        "vanilla_max_hop": {"type": "integer", "minimum": 1}
      }
    },
    "analysis": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "ripple_iterations": {"type": "integer", "minimum": 0},
        "top_m": {"type": "integer", "minimum": 1},
        "distribution": {"enum": ["bfs", "random"]}
      }
    },
    "sanity_null": {"type": "boolean"}
  }
})";

const std::string kHeader = R"(
    "schema": {"enum": ["ripplelab/1"]},
    "kind": {"type": "string"})";

const std::string kNum = R"({"type": "number"})";
const std::string kOptNum = R"({"type": ["number", "null"]})";
const std::string kCount = R"({"type": "integer", "minimum": 0})";

const std::string kRippleReport = R"({
  "type": "object",
  "required": ["schema", "kind", "evaluator", "metric", "status", "edits", "mean_delta", "total_abs_delta",
               "evaluated", "unevaluated", "cost", "buckets", "records"],
  "properties": {)" + kHeader + R"(,
    "evaluator": {"type": "string"},
    "metric": )" + kMetric + R"(,
    "status": {"enum": ["ok", "no_neighbors", "empty_selection"]},
    "edits": {"type": "array", "items": {"type": "string"}},
    "mean_delta": )" + kOptNum + R"(,
    "total_abs_delta": {"type": "number", "minimum": 0},
    "evaluated": )" + kCount + R"(,
    "unevaluated": )" + kCount + R"(,
    "cost": {
      "type": "object", "required": ["scoring_calls", "embedding_calls"],
      "properties": {"scoring_calls": )" + kCount + R"(, "embedding_calls": )" + kCount + R"(}
    },
    "buckets": {
      "type": "array", "minItems": 4, "maxItems": 4,
      "items": {
        "type": "object", "required": ["label", "count", "mean_delta", "sum_abs_delta"],
        "properties": {"label": {"enum": ["1", "2", "3+", "disconnected"]}, "count": )" + kCount + R"(,
                       "mean_delta": )" + kNum + R"(, "sum_abs_delta": {"type": "number", "minimum": 0}}
      }
    },
    "records": {
      "type": "array",
      "items": {
        "type": "object", "required": ["id", "hop", "pre", "post", "delta", "similarity"],
        "properties": {"id": )" + kCount + R"(, "hop": {"type": ["integer", "null"]}, "pre": )" + kNum + R"(,
                       "post": )" + kNum + R"(, "delta": )" + kNum + R"(, "similarity": )" + kOptNum + R"(}
      }
    }
  }
})";

const std::string kSirOutcome = R"({
  "type": "object",
  "required": ["schema", "kind", "k", "status", "pool_size", "selected", "revision", "edit_ppl",
               "selected_before", "selected_after", "full_before", "full_after"],
  "properties": {)" + kHeader + R"(,
    "k": {"type": "integer", "minimum": 1},
    "status": {"enum": ["revised", "nothing_to_revise"]},
    "pool_size": )" + kCount + R"(,
    "selected": {"type": "array", "items": {"type": "object", "required": ["id", "delta"]}},
    "revision": {"type": "object", "required": ["steps", "final_loss"]},
    "edit_ppl": {"type": "object", "required": ["pre_edit", "post_edit", "post_sir"]},
    "selected_before": {"type": "object"},
    "selected_after": {"type": "object"},
    "full_before": {"type": "object"},
    "full_after": {"type": "object"}
  }
})";

const std::string kDeltaStats = R"({
  "type": "object",
  "required": ["schema", "kind", "count", "mean", "stddev", "threshold", "outlier_count", "outlier_fraction",
               "outliers", "histogram"],
  "properties": {)" + kHeader + R"(,
    "count": {"type": "integer", "minimum": 1},
    "stddev": {"type": "number", "minimum": 0},
    "outliers": {"type": "array", "items": )" + kCount + R"(},
    "histogram": {
      "type": "object", "required": ["edges", "counts"],
      "properties": {
        "edges": {"type": "array", "minItems": 42, "maxItems": 42, "items": )" + kNum + R"(},
        "counts": {"type": "array", "minItems": 41, "maxItems": 41, "items": )" + kCount + R"(}
      }
    }
  }
})";

const std::string kGedPoint = R"({
  "type": "object", "required": ["iteration", "l1", "ged"],
  "properties": {"iteration": )" + kCount + R"(, "l1": )" + kCount + R"(, "ged": )" + kOptNum + R"(}
})";

const std::string kGedTrace = R"({
  "type": "object", "required": ["schema", "kind", "vs_gie_network", "vs_vanilla_kg"],
  "properties": {)" + kHeader + R"(,
    "vs_gie_network": {"type": "array", "items": )" + kGedPoint + R"(},
    "vs_vanilla_kg": {"type": "array", "items": )" + kGedPoint + R"(},
    "spearman": {"type": "object"}
  }
})";

const std::string kDegrees = R"({
  "type": "object", "required": ["schema", "kind", "graphs"],
  "properties": {)" + kHeader + R"(,
    "graphs": {
      "type": "object",
      "additionalProperties": {
        "type": "array",
        "items": {"type": "object", "required": ["degree", "frequency"],
                  "properties": {"degree": )" + kCount + R"(, "frequency": {"type": "integer", "minimum": 1}}}
      }
    }
  }
})";

const std::string kSelection = R"({
  "type": "object", "required": ["schema", "kind", "tau", "selected"],
  "properties": {)" + kHeader + R"(,
    "tau": )" + kNum + R"(,
    "selected": {"type": "array", "items": {"type": "object", "required": ["id", "similarity", "source_edit"]}}
  }
})";

const std::string kTrainReport = R"({
  "type": "object",
  "required": ["schema", "kind", "epochs", "loss_trace", "mean_object_ppl", "memorization_ppl",
               "reached_threshold", "status", "vocab_size", "parameter_count", "param_hash"],
  "properties": {)" + kHeader + R"(,
    "epochs": )" + kCount + R"(,
    "loss_trace": {"type": "array", "items": )" + kNum + R"(},
    "mean_object_ppl": {"type": "number", "minimum": 1},
    "status": {"enum": ["ok", "warning"]},
    "param_hash": {"type": "string"}
  }
})";

const std::string kEditReport = R"({
  "type": "object",
  "required": ["schema", "kind", "cell", "method", "edits", "steps", "success", "final_losses",
               "final_mean_loss", "counterfactual_ppl", "sanity_null"],
  "properties": {)" + kHeader + R"(,
    "edits": {"type": "array", "minItems": 1,
              "items": {"type": "object", "required": ["triplet", "description", "prefix", "counterfactual"]}},
    "success": {"type": "boolean"},
    "counterfactual_ppl": {"type": "object", "required": ["pre_edit", "post_edit"]}
  }
})";

const std::string kPrompts = R"({
  "type": "object", "required": ["schema", "kind", "facts"],
  "properties": {)" + kHeader + R"(,
    "facts": {
      "type": "array",
      "items": {
        "type": "object", "required": ["id", "subject", "relation", "object", "prompts"],
        "properties": {
          "prompts": {"type": "array", "minItems": 3,
                      "items": {"type": "object", "required": ["prefix", "sentence"]}}
        }
      }
    }
  }
})";

const std::string kEditTargets = R"({
  "type": "object", "required": ["schema", "kind", "cells"],
  "properties": {)" + kHeader + R"(,
    "cells": {
      "type": "array",
      "items": {
        "type": "object", "required": ["cell", "distribution", "count"],
        "properties": {
          "distribution": {"enum": ["bfs", "random"]},
          "edits": {"type": "array",
                    "items": {"type": "object", "required": ["triplet", "subject", "relation", "object", "new_object"]}},
          "error": {"type": "string"}
        },
        "oneOf": [{"required": ["edits"]}, {"required": ["error"]}]
      }
    }
  }
})";

const std::string kRippleStream = R"({
  "type": "object", "required": ["schema", "kind", "top_m", "distribution", "iterations"],
  "properties": {)" + kHeader + R"(,
    "iterations": {"type": "array",
                   "items": {"type": "object", "required": ["iteration", "edit", "edit_success", "most_affected", "edge_count"]}}
  }
})";

const std::string kSummary = R"({
  "type": "object", "required": ["schema", "kind", "config_hash", "cells"],
  "properties": {)" + kHeader + R"(,
    "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
    "cells": {"type": "array", "items": {"type": "object", "required": ["cell", "status"]}},
    "analysis": {"type": "object"}
  }
})";

const std::string kManifest = R"({
  "type": "object", "required": ["schema", "kind", "tool_version", "config_hash", "files", "stages", "cell_errors"],
  "properties": {)" + kHeader + R"(,
    "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
    "files": {"type": "array",
              "items": {"type": "object", "required": ["path", "sha256", "bytes"],
                        "properties": {"sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"}}}},
    "stages": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    "cell_errors": {"type": "object", "additionalProperties": {"type": "string"}}
  }
})";

const std::map<std::string, const std::string*, std::less<>>& schema_texts() {
    static const std::map<std::string, const std::string*, std::less<>> texts{
        {"run_config", &kRunConfig},     {"ripple_report", &kRippleReport},   {"sir_outcome", &kSirOutcome},
        {"delta_stats", &kDeltaStats},   {"ged_trace", &kGedTrace},           {"degree_distributions", &kDegrees},
        {"gie_selection", &kSelection},  {"train_report", &kTrainReport},     {"edit_report", &kEditReport},
        {"prompts", &kPrompts},          {"edit_targets", &kEditTargets},     {"ripple_stream", &kRippleStream},
        {"summary", &kSummary},          {"manifest", &kManifest},
    };
    return texts;
}

struct CompiledSchema {
    rapidjson::Document source;
    std::unique_ptr<rapidjson::SchemaDocument> schema;
};

const CompiledSchema& compiled_entry(std::string_view id) {
    static std::mutex mutex;
    static std::map<std::string, std::unique_ptr<CompiledSchema>, std::less<>> cache;
    std::lock_guard lock(mutex);
    if (auto it = cache.find(id); it != cache.end()) return *it->second;
    const auto& texts = schema_texts();
    const auto text = texts.find(id);
    if (text == texts.end()) throw ConfigError("no schema named '" + std::string(id) + "'");
    auto entry = std::make_unique<CompiledSchema>();
    if (entry->source.Parse(text->second->c_str()).HasParseError()) {
        throw Error("internal schema '" + std::string(id) + "' is not valid JSON");
    }
    entry->schema = std::make_unique<rapidjson::SchemaDocument>(entry->source);
    const auto& ref = *entry;
    cache.emplace(std::string(id), std::move(entry));
    return ref;
}

const rapidjson::SchemaDocument& compiled(std::string_view id) { return *compiled_entry(id).schema; }

const rapidjson::Document& schema_source(std::string_view id) { return compiled_entry(id).source; }

}  // namespace

bool has_schema(std::string_view id) { return schema_texts().contains(id); }

void validate_against(const nlohmann::json& doc, std::string_view schema_id) {
    const auto& schema = compiled(schema_id);
    rapidjson::Document d;
    const auto text = doc.dump();
    if (d.Parse(text.c_str()).HasParseError()) throw ConfigError("document is not valid JSON");
    rapidjson::SchemaValidator validator(schema);
    if (!d.Accept(validator)) {
        rapidjson::StringBuffer where;
        validator.GetInvalidDocumentPointer().StringifyUriFragment(where);
        std::string pointer = where.GetString();
        if (pointer.size() > 0 && pointer[0] == '#') pointer.erase(0, 1);
        std::string detail;
        if (std::string_view(validator.GetInvalidSchemaKeyword()) == "additionalProperties") {
            // Name the offending key: the first member not listed under "properties".
            const auto* props = rapidjson::Pointer(validator.GetInvalidSchemaPointer()).Get(schema_source(schema_id));
            const auto* obj = validator.GetInvalidDocumentPointer().Get(d);
            if (props && obj && obj->IsObject() && props->HasMember("properties")) {
                for (const auto& m : obj->GetObject()) {
                    if (!(*props)["properties"].HasMember(m.name)) {
                        detail = " (unknown key '" + std::string(m.name.GetString()) + "')";
                        break;
                    }
                }
            }
        }
        throw ConfigError(std::string(schema_id) + ": '" + validator.GetInvalidSchemaKeyword() + "' violated at '" +
                          (pointer.empty() ? "/" : pointer) + "'" + detail);
    }
}

void validate_document(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string()) {
        throw ConfigError("document has no \"kind\"");
    }
    validate_against(doc, doc["kind"].get<std::string>());
}

}  // namespace ripple
