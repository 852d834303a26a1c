#pragma once
// Selective Impact Revision: rank non-edited facts by how much an edit
// damaged them, then retrain the post-edit model on the ORIGINAL sentences of
// the K most damaged facts.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ripple/editors.hpp"
#include "ripple/evaluation.hpp"

namespace ripple {

enum class CandidatePool { GieSelected, FullKg };

std::string_view to_string(CandidatePool p);
CandidatePool parse_candidate_pool(std::string_view s);

struct SirConfig {
    std::size_t k = 5;
    CandidatePool pool = CandidatePool::GieSelected;
    GieConfig gie{};
    EditEngineConfig revision{};
    MetricKind ranking_metric = MetricKind::PPL;

    void validate() const;
};

struct SirOutcome {
    enum class Status { Revised, NothingToRevise };

    Status status = Status::Revised;
    std::vector<TripletId> selected;       // top-K, most damaged first
    std::vector<double> selected_deltas;   // their post-edit deltas, same order
    std::size_t pool_size = 0;
    std::optional<ModelSnapshot> post_sir;
    std::size_t revision_steps = 0;
    double revision_loss = 0.0;

    RippleReport selected_before;  // post-edit vs pre-edit on the selected set
    RippleReport selected_after;   // post-SIR vs pre-edit on the selected set
    RippleReport full_before;      // naive over the KG, post-edit
    RippleReport full_after;       // naive over the KG, post-SIR

    // PPL of each edited counterfactual fact under the three models, in the
    // evaluator's scope.
    std::vector<double> edit_ppl_pre;
    std::vector<double> edit_ppl_post_edit;
    std::vector<double> edit_ppl_post_sir;
};

std::string_view to_string(SirOutcome::Status s);

// The K entries with the largest damage (delta for PPL, -delta for
// higher-is-better metrics); ties go to the lower triplet id. Throws
// ConfigError for K == 0 or an empty list.
std::vector<TripletId> select_topk(std::span<const MetricDelta> deltas, std::size_t k,
                                   MetricKind kind = MetricKind::PPL);

// Runs SIR. Uses the evaluator's metric options for the before/after reports;
// ranking uses config.ranking_metric. Never mutates its input snapshots.
SirOutcome revise(const ModelSnapshot& post_edit, const ModelSnapshot& pre_edit, const Evaluator& evaluator,
                  const TemplateTable& templates, std::span<const EditRequest> edits, const SirConfig& config);

}  // namespace ripple
