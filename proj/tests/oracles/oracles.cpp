#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

using ripple::LmParams;
using ripple::TokenId;

std::vector<double> forward(const LmParams& p, const std::vector<TokenId>& context) {
    const auto d = static_cast<long>(p.embedding.cols());
    const auto h = static_cast<long>(p.hidden_b.size());
    const auto V = static_cast<long>(p.embedding.rows());
    std::vector<double> x;
    for (auto tok : context) {
        for (long k = 0; k < d; ++k) x.push_back(p.embedding(static_cast<long>(tok), k));
    }
    std::vector<double> hidden(static_cast<std::size_t>(h));
    for (long j = 0; j < h; ++j) {
        double s = p.hidden_b(j);
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * p.hidden_w(static_cast<long>(i), j);
        hidden[static_cast<std::size_t>(j)] = std::tanh(s);
    }
    std::vector<double> logits(static_cast<std::size_t>(V));
    double mx = -1e300;
    for (long v = 0; v < V; ++v) {
        double s = p.output_b(v);
        for (long j = 0; j < h; ++j) s += hidden[static_cast<std::size_t>(j)] * p.output_w(j, v);
        logits[static_cast<std::size_t>(v)] = s;
        mx = std::max(mx, s);
    }
    double z = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (auto& l : logits) l /= z;
    return logits;
}

double sequence_loss(const LmParams& p, const ripple::Sequence& seq) {
    const std::size_t c = p.context();
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t pos = seq.loss_from; pos < seq.tokens.size(); ++pos) {
        std::vector<TokenId> ctx(c, ripple::Vocab::kPad);
        for (std::size_t i = 0; i < c; ++i) {
            const std::size_t back = c - i;
            if (pos >= back) ctx[i] = seq.tokens[pos - back];
        }
        const auto probs = forward(p, ctx);
        total -= std::log(probs[seq.tokens[pos]]);
        ++n;
    }
    return total / static_cast<double>(n);
}

LmParams finite_difference_grad(const LmParams& p, const ripple::Sequence& seq, double h) {
    LmParams work = p;
    LmParams grad = LmParams::zeros_like(p);
    std::vector<double*> targets;
    grad.for_each_block([&](double* data, long size) {
        for (long i = 0; i < size; ++i) targets.push_back(data + i);
    });
    std::size_t idx = 0;
    work.for_each_block([&](double* data, long size) {
        for (long i = 0; i < size; ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = oracle::sequence_loss(work, seq);
            data[i] = keep - h;
            const double down = oracle::sequence_loss(work, seq);
            data[i] = keep;
            *targets[idx++] = (up - down) / (2.0 * h);
        }
    });
    return grad;
}

std::vector<ripple::TripletId> topk_by_sort(const std::vector<ripple::MetricDelta>& deltas, std::size_t k,
                                            ripple::MetricKind kind) {
    auto sorted = deltas;
    std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
        const double da = ripple::damage(kind, a.delta);
        const double db = ripple::damage(kind, b.delta);
        if (da != db) return da > db;
        return ripple::to_index(a.triplet) < ripple::to_index(b.triplet);
    });
    std::vector<ripple::TripletId> out;
    for (std::size_t i = 0; i < std::min(k, sorted.size()); ++i) out.push_back(sorted[i].triplet);
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
        }
    }
    return t[a.size()][b.size()];
}

double max_relative_error(const LmParams& analytic, const LmParams& numeric, double floor) {
    std::vector<double> a, n;
    analytic.for_each_block([&](const double* data, long size) { a.insert(a.end(), data, data + size); });
    numeric.for_each_block([&](const double* data, long size) { n.insert(n.end(), data, data + size); });
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({floor, std::abs(a[i]), std::abs(n[i])});
        worst = std::max(worst, std::abs(a[i] - n[i]) / scale);
    }
    return worst;
}

}  // namespace oracle
