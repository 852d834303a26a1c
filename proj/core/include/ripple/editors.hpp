#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ripple/kgstore.hpp"
#include "ripple/templates.hpp"
#include "ripple/tinylm.hpp"

namespace ripple {

enum class EditMethod { FT, FT_L };

std::string_view to_string(EditMethod m);
EditMethod parse_edit_method(std::string_view s);

struct EditEngineConfig {
    EditMethod method = EditMethod::FT;
    double learning_rate = 5e-4;
    double early_stop_loss = 0.03;
    std::size_t max_steps = 4000;
    double epsilon = 5e-4;  // L-infinity radius, FT_L only
    ParamMask mask = ParamMask::output_only();
    std::uint64_t seed = 0;
    std::size_t template_index = 0;

    void validate() const;
};

// A fact to be written into the model: the loss is the NLL of the tokens
// after `prefix` (the object), conditioned on the prefix.
struct FactExample {
    std::string prefix;
    std::string sentence;
};

struct EditOutcome {
    ModelSnapshot post;
    std::vector<double> final_losses;  // per fact, at the returned parameters
    double final_mean_loss = 0.0;
    std::size_t steps = 0;             // optimizer steps taken
    bool success = false;              // final_mean_loss <= early_stop_loss
};

// Common contract for anything that rewrites facts in a snapshot. Engines
// never mutate their input snapshot.
class EditEngine {
public:
    virtual ~EditEngine() = default;
    virtual std::string_view name() const = 0;
    virtual EditOutcome apply(const ModelSnapshot& pre, std::span<const FactExample> facts, std::string tag) const = 0;
};

// Joint-batch Adam fine-tuning with early stop. With FT_L, every coordinate is
// clamped into [theta_pre - eps, theta_pre + eps] after each step.
class FineTuneEngine final : public EditEngine {
public:
    explicit FineTuneEngine(EditEngineConfig config);
    std::string_view name() const override;
    EditOutcome apply(const ModelSnapshot& pre, std::span<const FactExample> facts, std::string tag) const override;
    const EditEngineConfig& config() const noexcept { return config_; }

private:
    EditEngineConfig config_;
};

std::unique_ptr<EditEngine> make_engine(const EditEngineConfig& config);

// Counterfactual sentences (prefix + o') for a batch of edit requests.
std::vector<FactExample> counterfactual_examples(const KnowledgeGraph& kg, const TemplateTable& templates,
                                                 std::span<const EditRequest> edits, std::size_t template_index);

// Original sentences for a set of triplets.
std::vector<FactExample> original_examples(const KnowledgeGraph& kg, const TemplateTable& templates,
                                           std::span<const TripletId> ids, std::size_t template_index);

EditOutcome apply_edits(const ModelSnapshot& pre, const KnowledgeGraph& kg, const TemplateTable& templates,
                        std::span<const EditRequest> edits, const EditEngineConfig& config);

// Batch i+1 starts from batch i's post-edit snapshot.
std::vector<EditOutcome> edit_sequence(const ModelSnapshot& pre, const KnowledgeGraph& kg,
                                       const TemplateTable& templates,
                                       std::span<const std::vector<EditRequest>> batches,
                                       const EditEngineConfig& config);

}  // namespace ripple
