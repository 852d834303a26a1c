#include "ripple/tinylm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "ripple/error.hpp"
#include "ripple/rng.hpp"

namespace ripple {

// ---- tokenization ------------------------------------------------------------

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else if (c < 0x80 && std::ispunct(c)) {
            continue;
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

Vocab::Vocab() : tokens_{"<pad>", "<bos>", "<unk>"} { reindex(); }

Vocab Vocab::build(std::span<const std::string> texts, std::size_t cap) {
    std::map<std::string, std::size_t> freq;
    for (const auto& t : texts) {
        for (auto& w : split_words(t)) ++freq[w];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    for (auto& [word, count] : ranked) {
        if (cap != 0 && v.tokens_.size() >= cap) break;
        v.tokens_.push_back(word);
    }
    v.reindex();
    return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < kReserved || tokens[kPad] != "<pad>" || tokens[kBos] != "<bos>" || tokens[kUnk] != "<unk>") {
        throw ConfigError("vocabulary must start with <pad>, <bos>, <unk>");
    }
    Vocab v;
    v.tokens_ = std::move(tokens);
    v.reindex();
    if (v.lookup_.size() != v.tokens_.size()) throw ConfigError("vocabulary has duplicate tokens");
    return v;
}

void Vocab::reindex() {
    lookup_.clear();
    std::uint64_t h = fnv1a64("");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        lookup_.emplace(tokens_[i], static_cast<TokenId>(i));
        h = fnv1a64(tokens_[i], h);
        h = fnv1a64("\n", h);
    }
    hash_ = h;
}

std::optional<TokenId> Vocab::find(std::string_view word) const {
    auto it = lookup_.find(std::string(word));
    if (it == lookup_.end() || it->second < kReserved) return std::nullopt;
    return it->second;
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
    std::vector<TokenId> ids{kBos};
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (!out.empty()) out.push_back(' ');
        out += token(id);
    }
    return out;
}

// ---- parameters --------------------------------------------------------------

void LmConfig::validate() const {
    if (context < 2) throw ConfigError("lm.context must be >= 2");
    if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("lm dimensions must be positive");
    if (!(adam.learning_rate >= 0.0)) throw ConfigError("lm learning rate must be >= 0");
    if (batch_size == 0) throw ConfigError("lm.batch_size must be >= 1");
    if (vocab_cap != 0 && vocab_cap <= Vocab::kReserved) throw ConfigError("lm.vocab_cap too small");
}

LmParams LmParams::zeros(std::size_t context, std::size_t embed_dim, std::size_t hidden_dim,
                         std::size_t vocab_size) {
    const auto V = static_cast<Eigen::Index>(vocab_size);
    const auto d = static_cast<Eigen::Index>(embed_dim);
    const auto h = static_cast<Eigen::Index>(hidden_dim);
    const auto cd = static_cast<Eigen::Index>(context * embed_dim);
    return LmParams{Eigen::MatrixXd::Zero(V, d), Eigen::MatrixXd::Zero(cd, h), Eigen::VectorXd::Zero(h),
                    Eigen::MatrixXd::Zero(h, V), Eigen::VectorXd::Zero(V)};
}

LmParams LmParams::zeros_like(const LmParams& shape) {
    return zeros(shape.context(), shape.embed_dim(), shape.hidden_dim(), shape.vocab_size());
}

LmParams LmParams::random(const LmConfig& cfg, std::size_t vocab_size, std::uint64_t seed) {
    cfg.validate();
    LmParams p = zeros(cfg.context, cfg.embed_dim, cfg.hidden_dim, vocab_size);
    Rng rng(derive_seed(seed, "lm-init"));
    auto fill = [&rng](double* data, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) data[i] = uniform_real(rng, -0.1, 0.1);
    };
    fill(p.embedding.data(), p.embedding.size());
    fill(p.hidden_w.data(), p.hidden_w.size());
    fill(p.output_w.data(), p.output_w.size());
    return p;
}

std::size_t LmParams::parameter_count() const noexcept {
    std::size_t n = 0;
    for_each_block([&n](const double*, Eigen::Index size) { n += static_cast<std::size_t>(size); });
    return n;
}

bool LmParams::all_finite() const {
    bool ok = true;
    for_each_block([&ok](const double* data, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n && ok; ++i) ok = std::isfinite(data[i]);
    });
    return ok;
}

std::uint64_t LmParams::hash() const {
    std::uint64_t h = fnv1a64("");
    for_each_block([&h](const double* data, Eigen::Index n) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(data), static_cast<std::size_t>(n) * sizeof(double)),
                    h);
    });
    return h;
}

double LmParams::max_abs_diff(const LmParams& other) const {
    if (embedding.rows() != other.embedding.rows() || embedding.cols() != other.embedding.cols() ||
        hidden_w.rows() != other.hidden_w.rows() || hidden_w.cols() != other.hidden_w.cols()) {
        throw ConfigError("max_abs_diff: parameter shapes differ");
    }
    double m = 0.0;
    m = std::max(m, (embedding - other.embedding).cwiseAbs().maxCoeff());
    m = std::max(m, (hidden_w - other.hidden_w).cwiseAbs().maxCoeff());
    m = std::max(m, (hidden_b - other.hidden_b).cwiseAbs().maxCoeff());
    m = std::max(m, (output_w - other.output_w).cwiseAbs().maxCoeff());
    m = std::max(m, (output_b - other.output_b).cwiseAbs().maxCoeff());
    return m;
}

// ---- forward / backward --------------------------------------------------------

std::vector<TokenId> context_window(std::span<const TokenId> tokens, std::size_t position, std::size_t context) {
    std::vector<TokenId> ctx(context, Vocab::kPad);
    for (std::size_t k = 0; k < context; ++k) {
        // slot k holds token at position - context + k
        if (position + k >= context) {
            const std::size_t src = position + k - context;
            if (src < tokens.size()) ctx[k] = tokens[src];
        }
    }
    return ctx;
}

namespace {

// Flattened prediction rows for a batch of sequences.
struct Rows {
    std::vector<TokenId> contexts;  // rows * c
    std::vector<TokenId> targets;
    std::vector<std::size_t> owner;  // sequence index per row
    std::size_t count = 0;
};

Rows make_rows(std::span<const Sequence> batch, std::size_t c) {
    Rows rows;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& seq = batch[s];
        if (seq.loss_from == 0) throw ConfigError("sequence loss_from must be >= 1");
        if (seq.target_count() == 0) throw ConfigError("sequence needs at least one scored token after BOS");
        for (std::size_t pos = seq.loss_from; pos < seq.tokens.size(); ++pos) {
            const auto ctx = context_window(seq.tokens, pos, c);
            rows.contexts.insert(rows.contexts.end(), ctx.begin(), ctx.end());
            rows.targets.push_back(seq.tokens[pos]);
            rows.owner.push_back(s);
            ++rows.count;
        }
    }
    return rows;
}

struct Activations {
    Eigen::MatrixXd x;         // n x cd
    Eigen::MatrixXd hidden;    // n x h
    Eigen::MatrixXd log_prob;  // n x V
};

Activations run_forward(const LmParams& p, const Rows& rows) {
    const auto n = static_cast<Eigen::Index>(rows.count);
    const std::size_t c = p.context();
    const auto d = static_cast<Eigen::Index>(p.embed_dim());
    const auto V = static_cast<TokenId>(p.vocab_size());

    Activations a;
    a.x.resize(n, static_cast<Eigen::Index>(c) * d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            const TokenId tok = rows.contexts[static_cast<std::size_t>(i) * c + k];
            if (tok >= V) throw ConfigError("token id out of vocabulary range");
            a.x.block(i, static_cast<Eigen::Index>(k) * d, 1, d) = p.embedding.row(tok);
        }
    }
    a.hidden.noalias() = a.x * p.hidden_w;
    a.hidden.rowwise() += p.hidden_b.transpose();
    a.hidden = a.hidden.array().tanh().matrix();

    a.log_prob.noalias() = a.hidden * p.output_w;
    a.log_prob.rowwise() += p.output_b.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        auto row = a.log_prob.row(i);
        const double mx = row.maxCoeff();
        const double lse = std::log((row.array() - mx).exp().sum());
        row.array() -= mx + lse;
    }
    return a;
}

// Per-sequence mean NLL from the forward pass.
std::vector<double> sequence_means(const Activations& a, const Rows& rows, std::span<const Sequence> batch) {
    std::vector<double> sums(batch.size(), 0.0);
    for (std::size_t i = 0; i < rows.count; ++i) {
        sums[rows.owner[i]] -= a.log_prob(static_cast<Eigen::Index>(i), rows.targets[i]);
    }
    for (std::size_t s = 0; s < batch.size(); ++s) sums[s] /= static_cast<double>(batch[s].target_count());
    return sums;
}

double mean_of(const std::vector<double>& v) {
    double total = 0.0;
    for (double x : v) total += x;
    return total / static_cast<double>(v.size());
}

}  // namespace

Eigen::VectorXd forward(const LmParams& params, std::span<const TokenId> context) {
    if (context.size() != params.context()) throw ConfigError("forward: context length must equal c");
    Rows rows;
    rows.contexts.assign(context.begin(), context.end());
    rows.targets.push_back(0);
    rows.owner.push_back(0);
    rows.count = 1;
    const auto a = run_forward(params, rows);
    return a.log_prob.row(0).transpose().array().exp().matrix();
}

std::vector<double> batch_losses(const LmParams& params, std::span<const Sequence> batch) {
    if (batch.empty()) return {};
    const auto rows = make_rows(batch, params.context());
    return sequence_means(run_forward(params, rows), rows, batch);
}

double sequence_loss(const LmParams& params, const Sequence& sequence) {
    return batch_losses(params, std::span(&sequence, 1)).front();
}

LossAndGrad batch_loss_and_grad(const LmParams& p, std::span<const Sequence> batch, const ParamMask& mask) {
    if (batch.empty()) throw ConfigError("batch_loss_and_grad: empty batch");
    const auto rows = make_rows(batch, p.context());
    const auto a = run_forward(p, rows);

    LossAndGrad out{mean_of(sequence_means(a, rows, batch)), LmParams::zeros_like(p)};
    auto& g = out.grad;

    // dL/dlogits = w * (softmax - onehot), with w = 1 / (targets in sequence * batch size).
    Eigen::MatrixXd dz = a.log_prob.array().exp().matrix();
    for (std::size_t i = 0; i < rows.count; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        dz(r, rows.targets[i]) -= 1.0;
        const double w = 1.0 / (static_cast<double>(batch[rows.owner[i]].target_count()) *
                                static_cast<double>(batch.size()));
        dz.row(r) *= w;
    }

    if (mask.output) {
        g.output_w.noalias() = a.hidden.transpose() * dz;
        g.output_b = dz.colwise().sum().transpose();
    }
    if (!mask.hidden && !mask.embedding) return out;

    Eigen::MatrixXd da = dz * p.output_w.transpose();
    da.array() *= 1.0 - a.hidden.array().square();

    if (mask.hidden) {
        g.hidden_w.noalias() = a.x.transpose() * da;
        g.hidden_b = da.colwise().sum().transpose();
    }
    if (mask.embedding) {
        const Eigen::MatrixXd dx = da * p.hidden_w.transpose();
        const std::size_t c = p.context();
        const auto d = static_cast<Eigen::Index>(p.embed_dim());
        for (std::size_t i = 0; i < rows.count; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
                const TokenId tok = rows.contexts[i * c + k];
                g.embedding.row(tok) += dx.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k) * d, 1, d);
            }
        }
    }
    return out;
}

LossAndGrad loss_and_grad(const LmParams& params, const Sequence& sequence) {
    return batch_loss_and_grad(params, std::span(&sequence, 1));
}

// ---- Adam --------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const LmParams& shape, AdamConfig config, ParamMask mask)
    : config_(config), mask_(mask), m_(LmParams::zeros_like(shape)), v_(LmParams::zeros_like(shape)) {}

void AdamOptimizer::step(LmParams& params, const LmParams& grad) {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double lr = config_.learning_rate, eps = config_.epsilon;

    auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    if (mask_.embedding) update(params.embedding, grad.embedding, m_.embedding, v_.embedding);
    if (mask_.hidden) {
        update(params.hidden_w, grad.hidden_w, m_.hidden_w, v_.hidden_w);
        update(params.hidden_b, grad.hidden_b, m_.hidden_b, v_.hidden_b);
    }
    if (mask_.output) {
        update(params.output_w, grad.output_w, m_.output_w, v_.output_w);
        update(params.output_b, grad.output_b, m_.output_b, v_.output_b);
    }
}

// ---- training ------------------------------------------------------------------

TrainResult train(LmParams params, std::span<const Sequence> corpus, const LmConfig& cfg, const EpochMonitor& monitor) {
    cfg.validate();
    if (corpus.empty()) throw ConfigError("train: empty corpus");

    TrainResult result;
    AdamOptimizer adam(params, cfg.adam);
    Rng rng(derive_seed(cfg.seed, "lm-train-shuffle"));
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Sequence> batch;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle(order, rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
            auto lg = batch_loss_and_grad(params, batch);
            if (!std::isfinite(lg.loss)) {
                throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
            }
            loss_sum += lg.loss * static_cast<double>(batch.size());
            adam.step(params, lg.grad);
        }
        if (!params.all_finite()) {
            throw Error("training diverged (non-finite parameters) at epoch " + std::to_string(epoch));
        }
        const double epoch_loss = loss_sum / static_cast<double>(corpus.size());
        result.loss_trace.push_back(epoch_loss);
        result.epochs = epoch + 1;
        if (cfg.early_stop_loss > 0.0 && epoch_loss <= cfg.early_stop_loss) {
            result.reached_threshold = true;
            break;
        }
        if (monitor && monitor(epoch, params)) {
            result.stopped_by_monitor = true;
            break;
        }
    }
    result.params = std::move(params);
    return result;
}

// ---- snapshots and scoring ---------------------------------------------------------

ModelSnapshot::ModelSnapshot(LmConfig config, std::shared_ptr<const Vocab> vocab, LmParams params, std::string tag) {
    if (!vocab) throw ConfigError("snapshot needs a vocabulary");
    if (params.vocab_size() != vocab->size()) throw ConfigError("snapshot: parameter/vocabulary size mismatch");
    auto s = std::make_shared<State>();
    s->config = std::move(config);
    s->vocab = std::move(vocab);
    s->param_hash = params.hash();
    s->params = std::move(params);
    s->tag = std::move(tag);
    state_ = std::move(s);
}

ModelSnapshot ModelSnapshot::with_params(LmParams params, std::string tag) const {
    return ModelSnapshot(state_->config, state_->vocab, std::move(params), std::move(tag));
}

Sequence make_sequence(const Vocab& vocab, std::string_view sentence) {
    return Sequence{vocab.encode(sentence), 1};
}

Sequence make_conditional_sequence(const Vocab& vocab, std::string_view prefix, std::string_view sentence) {
    Sequence seq{vocab.encode(sentence), vocab.encode(prefix).size()};
    if (seq.loss_from > seq.tokens.size()) throw ConfigError("prefix is longer than the sentence");
    return seq;
}

double perplexity(const ModelSnapshot& snapshot, std::string_view text) {
    const auto seq = make_sequence(snapshot.vocab(), text);
    if (seq.target_count() == 0) throw ConfigError("perplexity: empty text");
    return std::exp(sequence_loss(snapshot.params(), seq));
}

double conditional_perplexity(const ModelSnapshot& snapshot, std::string_view prefix, std::string_view sentence) {
    const auto seq = make_conditional_sequence(snapshot.vocab(), prefix, sentence);
    if (seq.target_count() == 0) throw ConfigError("conditional_perplexity: nothing after the prefix");
    return std::exp(sequence_loss(snapshot.params(), seq));
}

PromptEmbedding embed_prompt(const ModelSnapshot& snapshot, std::string_view text) {
    const auto& E = snapshot.params().embedding;
    const auto ids = snapshot.vocab().encode(text);
    PromptEmbedding out;
    out.vector = Eigen::VectorXd::Zero(E.cols());
    for (std::size_t i = 1; i < ids.size(); ++i) out.vector += E.row(ids[i]).transpose();
    const double norm = out.vector.norm();
    if (ids.size() <= 1 || norm == 0.0 || !std::isfinite(norm)) {
        out.vector.setZero();
        out.vector(0) = 1.0;
        out.degenerate = true;
        return out;
    }
    // The 1/n of the mean cancels under normalisation.
    out.vector /= norm;
    return out;
}

std::vector<TokenId> generate_ids(const ModelSnapshot& snapshot, std::string_view prompt, std::size_t max_tokens) {
    if (max_tokens == 0) throw ConfigError("generate: max_tokens must be >= 1");
    auto tokens = snapshot.vocab().encode(prompt);
    const std::size_t c = snapshot.params().context();
    std::vector<TokenId> out;
    for (std::size_t step = 0; step < max_tokens; ++step) {
        const auto ctx = context_window(tokens, tokens.size(), c);
        const Eigen::VectorXd p = forward(snapshot.params(), ctx);
        TokenId best = 0;
        for (Eigen::Index i = 1; i < p.size(); ++i) {
            if (p(i) > p(best)) best = static_cast<TokenId>(i);
        }
        tokens.push_back(best);
        out.push_back(best);
    }
    return out;
}

std::string generate(const ModelSnapshot& snapshot, std::string_view prompt, std::size_t max_tokens) {
    return snapshot.vocab().decode(generate_ids(snapshot, prompt, max_tokens));
}

}  // namespace ripple
