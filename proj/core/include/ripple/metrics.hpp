#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ripple/kgstore.hpp"
#include "ripple/templates.hpp"
#include "ripple/tinylm.hpp"

namespace ripple {

enum class MetricKind { PPL, BLEU4, ROUGE1_F, ROUGEL_F };

std::string_view to_string(MetricKind k);
MetricKind parse_metric_kind(std::string_view s);

// PPL: lower is better. BLEU/ROUGE: higher is better.
constexpr bool higher_is_better(MetricKind k) noexcept { return k != MetricKind::PPL; }

// Signed damage: positive means the fact got worse.
constexpr double damage(MetricKind k, double delta) noexcept { return higher_is_better(k) ? -delta : delta; }

enum class PplScope { FullSentence, ObjectOnly };

std::string_view to_string(PplScope s);
PplScope parse_ppl_scope(std::string_view s);

struct MetricDelta {
    TripletId triplet{};
    double pre = 0.0;
    double post = 0.0;
    double delta = 0.0;  // post - pre
};

struct ScoreOptions {
    MetricKind kind = MetricKind::PPL;
    std::size_t gen_len = 10;
    // Object-only by default: with a fixed-window LM the subject token is not
    // predictable from the prefix and its NLL swamps the per-fact signal.
    PplScope scope = PplScope::ObjectOnly;
};

// Single-snapshot PPL of a fact under the chosen scope.
double fact_perplexity(const ModelSnapshot& snapshot, const PromptedFact& fact, PplScope scope);

// Metric change of one fact between two snapshots. For PPL both sides are
// model perplexities. For BLEU/ROUGE the post-edit generation (prediction) is
// compared with the pre-edit generation (reference) from the same prefix; the
// pre score is the self-comparison value 1.0.
MetricDelta score(const ScoreOptions& opts, const ModelSnapshot& pre, const ModelSnapshot& post,
                  const PromptedFact& fact);

// Sentence BLEU-4: geometric mean of clipped n-gram precisions times the
// brevity penalty, no smoothing. Orders for which the prediction has no
// n-grams (prediction shorter than n) are left out of the mean; an order with
// n-grams but zero matches makes the score 0.
double bleu4(std::span<const std::string> prediction, std::span<const std::string> reference);

double rouge1_f(std::span<const std::string> prediction, std::span<const std::string> reference);
double rougeL_f(std::span<const std::string> prediction, std::span<const std::string> reference);

// Dispatch on BLEU4 / ROUGE1_F / ROUGEL_F.
double text_metric(MetricKind kind, std::span<const std::string> prediction, std::span<const std::string> reference);

// Whitespace tokens of a generated string.
std::vector<std::string> whitespace_tokens(std::string_view text);

}  // namespace ripple
