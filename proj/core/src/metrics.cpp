#include "ripple/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ripple/error.hpp"

namespace ripple {

std::string_view to_string(MetricKind k) {
    switch (k) {
        case MetricKind::PPL: return "ppl";
        case MetricKind::BLEU4: return "bleu4";
        case MetricKind::ROUGE1_F: return "rouge1_f";
        case MetricKind::ROUGEL_F: return "rougeL_f";
    }
    return "?";
}

MetricKind parse_metric_kind(std::string_view s) {
    if (s == "ppl" || s == "PPL") return MetricKind::PPL;
    if (s == "bleu4" || s == "BLEU4") return MetricKind::BLEU4;
    if (s == "rouge1_f" || s == "ROUGE1_F") return MetricKind::ROUGE1_F;
    if (s == "rougeL_f" || s == "ROUGEL_F") return MetricKind::ROUGEL_F;
    throw ConfigError("unknown metric '" + std::string(s) + "'");
}

std::string_view to_string(PplScope s) {
    return s == PplScope::FullSentence ? "full" : "object";
}

PplScope parse_ppl_scope(std::string_view s) {
    if (s == "full") return PplScope::FullSentence;
    if (s == "object") return PplScope::ObjectOnly;
    throw ConfigError("unknown ppl scope '" + std::string(s) + "'");
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

double fact_perplexity(const ModelSnapshot& snapshot, const PromptedFact& fact, PplScope scope) {
    return scope == PplScope::FullSentence ? perplexity(snapshot, fact.sentence)
                                           : conditional_perplexity(snapshot, fact.prefix, fact.sentence);
}

MetricDelta score(const ScoreOptions& opts, const ModelSnapshot& pre, const ModelSnapshot& post,
                  const PromptedFact& fact) {
    MetricDelta d;
    d.triplet = fact.triplet;
    if (opts.kind == MetricKind::PPL) {
        d.pre = fact_perplexity(pre, fact, opts.scope);
        d.post = fact_perplexity(post, fact, opts.scope);
    } else {
        if (opts.gen_len == 0) throw ConfigError("score: empty generation (gen_len = 0)");
        const auto reference = whitespace_tokens(generate(pre, fact.prefix, opts.gen_len));
        const auto prediction = whitespace_tokens(generate(post, fact.prefix, opts.gen_len));
        if (reference.empty() || prediction.empty()) throw Error("score: empty generation");
        d.pre = 1.0;
        d.post = text_metric(opts.kind, prediction, reference);
    }
    d.delta = d.post - d.pre;
    if (!std::isfinite(d.pre) || !std::isfinite(d.post)) throw Error("score: non-finite metric value");
    return d;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> toks, std::size_t n) {
    NgramCounts counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

void require_nonempty(std::span<const std::string> a, std::span<const std::string> b, const char* what) {
    if (a.empty() || b.empty()) throw ConfigError(std::string(what) + ": empty input");
}

double f1(double overlap, std::size_t pred_len, std::size_t ref_len) {
    if (overlap == 0.0) return 0.0;
    const double p = overlap / static_cast<double>(pred_len);
    const double r = overlap / static_cast<double>(ref_len);
    return 2.0 * p * r / (p + r);
}

}  // namespace

double bleu4(std::span<const std::string> prediction, std::span<const std::string> reference) {
    require_nonempty(prediction, reference, "bleu4");
    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto pred = ngrams(prediction, n);
        if (pred.empty()) continue;
        const auto ref = ngrams(reference, n);
        std::size_t total = 0;
        std::size_t matched = 0;
        for (const auto& [gram, count] : pred) {
            total += count;
            if (auto it = ref.find(gram); it != ref.end()) matched += std::min(count, it->second);
        }
        if (matched == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
        ++orders;
    }
    const double precision = std::exp(log_sum / static_cast<double>(orders));
    const double pred_len = static_cast<double>(prediction.size());
    const double ref_len = static_cast<double>(reference.size());
    const double bp = pred_len < ref_len ? std::exp(1.0 - ref_len / pred_len) : 1.0;
    return precision * bp;
}

double rouge1_f(std::span<const std::string> prediction, std::span<const std::string> reference) {
    require_nonempty(prediction, reference, "rouge1");
    std::map<std::string_view, std::size_t> ref_counts;
    for (const auto& w : reference) ++ref_counts[w];
    std::size_t overlap = 0;
    for (const auto& w : prediction) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return f1(static_cast<double>(overlap), prediction.size(), reference.size());
}

double rougeL_f(std::span<const std::string> prediction, std::span<const std::string> reference) {
    require_nonempty(prediction, reference, "rougeL");
    // LCS by rolling rows.
    std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
    for (std::size_t i = 1; i <= prediction.size(); ++i) {
        for (std::size_t j = 1; j <= reference.size(); ++j) {
            cur[j] = prediction[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return f1(static_cast<double>(prev[reference.size()]), prediction.size(), reference.size());
}

double text_metric(MetricKind kind, std::span<const std::string> prediction, std::span<const std::string> reference) {
    switch (kind) {
        case MetricKind::BLEU4: return bleu4(prediction, reference);
        case MetricKind::ROUGE1_F: return rouge1_f(prediction, reference);
        case MetricKind::ROUGEL_F: return rougeL_f(prediction, reference);
        case MetricKind::PPL: break;
    }
    throw ConfigError("text_metric: PPL is not a text-overlap metric");
}

}  // namespace ripple
