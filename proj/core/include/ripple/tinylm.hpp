#pragma once
// Fixed-window neural language model with hand-written exact gradients.
//
//   context (c token ids, left-padded with PAD)
//     -> concatenated embeddings x (c*d)
//     -> tanh(x W1 + b1)            (h)
//     -> logits = hidden W2 + b2    (V)
//     -> softmax
//
// All numerics are double precision. Scoring entry points take a
// ModelSnapshot, which is immutable and can be shared across threads.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace ripple {

using TokenId = std::uint32_t;

// Lowercases ASCII, drops ASCII punctuation, splits on whitespace.
std::vector<std::string> split_words(std::string_view text);

class Vocab {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kUnk = 2;
    static constexpr std::size_t kReserved = 3;

    Vocab();

    // Builds from a corpus. Tokens are ordered by descending frequency, then
    // lexicographically. cap = 0 means unlimited; otherwise the vocabulary
    // (reserved ids included) is truncated to `cap` entries.
    static Vocab build(std::span<const std::string> texts, std::size_t cap = 0);

    // Rebuilds from a full token list (reserved entries first).
    static Vocab from_tokens(std::vector<std::string> tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    std::optional<TokenId> find(std::string_view word) const;
    TokenId id(std::string_view word) const { return find(word).value_or(kUnk); }
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    // BOS-prefixed token ids; unknown words map to UNK.
    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    std::uint64_t hash() const noexcept { return hash_; }

private:
    void reindex();

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> lookup_;
    std::uint64_t hash_ = 0;
};

struct AdamConfig {
    double learning_rate = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct LmConfig {
    std::size_t context = 6;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 96;
    std::size_t vocab_cap = 0;
    AdamConfig adam{};
    std::uint64_t seed = 7;
    std::size_t max_epochs = 150;
    double early_stop_loss = 0.0;  // mean epoch loss threshold; 0 disables
    std::size_t batch_size = 32;

    void validate() const;
};

struct LmParams {
    Eigen::MatrixXd embedding;  // V x d
    Eigen::MatrixXd hidden_w;   // (c*d) x h
    Eigen::VectorXd hidden_b;   // h
    Eigen::MatrixXd output_w;   // h x V
    Eigen::VectorXd output_b;   // V

    static LmParams zeros(std::size_t context, std::size_t embed_dim, std::size_t hidden_dim,
                          std::size_t vocab_size);
    static LmParams zeros_like(const LmParams& shape);
    // Weights uniform in (-0.1, 0.1), biases zero.
    static LmParams random(const LmConfig& cfg, std::size_t vocab_size, std::uint64_t seed);

    std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(embedding.rows()); }
    std::size_t embed_dim() const noexcept { return static_cast<std::size_t>(embedding.cols()); }
    std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(hidden_b.size()); }
    std::size_t context() const noexcept {
        return embed_dim() == 0 ? 0 : static_cast<std::size_t>(hidden_w.rows()) / embed_dim();
    }
    std::size_t parameter_count() const noexcept;
    bool all_finite() const;

    // FNV-1a over the raw bytes of every block, in declaration order.
    std::uint64_t hash() const;
    // max |a - b| over all coordinates; shapes must match.
    double max_abs_diff(const LmParams& other) const;

    // Visits the five blocks as flat mutable/const arrays.
    template <class F>
    void for_each_block(F&& f) {
        f(embedding.data(), embedding.size());
        f(hidden_w.data(), hidden_w.size());
        f(hidden_b.data(), hidden_b.size());
        f(output_w.data(), output_w.size());
        f(output_b.data(), output_b.size());
    }
    template <class F>
    void for_each_block(F&& f) const {
        f(embedding.data(), embedding.size());
        f(hidden_w.data(), hidden_w.size());
        f(hidden_b.data(), hidden_b.size());
        f(output_w.data(), output_w.size());
        f(output_b.data(), output_b.size());
    }
};

// Which parameter groups an optimizer may touch.
struct ParamMask {
    bool embedding = true;
    bool hidden = true;  // W1, b1
    bool output = true;  // W2, b2

    static ParamMask all() { return {}; }
    static ParamMask output_only() { return {false, false, true}; }
};

// A training/scoring sequence: BOS-prefixed ids. Loss covers positions
// [loss_from, tokens.size()); loss_from = 1 scores the whole sentence.
struct Sequence {
    std::vector<TokenId> tokens;
    std::size_t loss_from = 1;

    std::size_t target_count() const noexcept {
        return tokens.size() > loss_from ? tokens.size() - loss_from : 0;
    }
};

struct LossAndGrad {
    double loss = 0.0;
    LmParams grad;
};

// The c ids preceding `position`, left-padded with PAD.
std::vector<TokenId> context_window(std::span<const TokenId> tokens, std::size_t position, std::size_t context);

// Softmax distribution over the vocabulary; context.size() must equal c.
Eigen::VectorXd forward(const LmParams& params, std::span<const TokenId> context);

// Mean token cross-entropy and its exact gradient. Throws ConfigError when the
// sequence has no scored position (fewer than 2 tokens including BOS).
LossAndGrad loss_and_grad(const LmParams& params, const Sequence& sequence);

// Forward-only mean token cross-entropy.
double sequence_loss(const LmParams& params, const Sequence& sequence);

// Mean over sequences of each sequence's mean token loss, with gradient.
// Gradient blocks outside the mask are left at zero.
LossAndGrad batch_loss_and_grad(const LmParams& params, std::span<const Sequence> batch,
                                const ParamMask& mask = ParamMask::all());

// Per-sequence mean token losses, forward only.
std::vector<double> batch_losses(const LmParams& params, std::span<const Sequence> batch);

// Adam with bias-corrected moments. Masked-out blocks are never written.
class AdamOptimizer {
public:
    AdamOptimizer(const LmParams& shape, AdamConfig config, ParamMask mask = ParamMask::all());
    void step(LmParams& params, const LmParams& grad);
    std::size_t steps() const noexcept { return steps_; }

private:
    AdamConfig config_;
    ParamMask mask_;
    LmParams m_;
    LmParams v_;
    std::size_t steps_ = 0;
};

struct TrainResult {
    LmParams params;
    std::vector<double> loss_trace;  // mean loss per epoch
    std::size_t epochs = 0;
    bool reached_threshold = false;
    bool stopped_by_monitor = false;
};

// Called after each epoch with (epoch index, params); return true to stop.
using EpochMonitor = std::function<bool(std::size_t, const LmParams&)>;

// Minibatch Adam over a shuffled corpus (seeded by cfg.seed). Throws Error
// naming the epoch if the loss turns non-finite.
TrainResult train(LmParams params, std::span<const Sequence> corpus, const LmConfig& cfg,
                  const EpochMonitor& monitor = {});

// Immutable model: config + shared vocab + parameters + tag.
class ModelSnapshot {
public:
    ModelSnapshot(LmConfig config, std::shared_ptr<const Vocab> vocab, LmParams params, std::string tag);

    const LmConfig& config() const noexcept { return state_->config; }
    const Vocab& vocab() const noexcept { return *state_->vocab; }
    const std::shared_ptr<const Vocab>& vocab_ptr() const noexcept { return state_->vocab; }
    const LmParams& params() const noexcept { return state_->params; }
    const std::string& tag() const noexcept { return state_->tag; }
    std::uint64_t param_hash() const noexcept { return state_->param_hash; }

    ModelSnapshot with_params(LmParams params, std::string tag) const;

    // Same underlying object (cheap identity check).
    bool same_as(const ModelSnapshot& other) const noexcept { return state_ == other.state_; }

private:
    struct State {
        LmConfig config;
        std::shared_ptr<const Vocab> vocab;
        LmParams params;
        std::string tag;
        std::uint64_t param_hash = 0;
    };
    std::shared_ptr<const State> state_;
};

// Sequence for a sentence, optionally scoring only the continuation after `prefix`.
Sequence make_sequence(const Vocab& vocab, std::string_view sentence);
Sequence make_conditional_sequence(const Vocab& vocab, std::string_view prefix, std::string_view sentence);

// exp(mean token NLL) over the full sentence after BOS. Throws ConfigError on empty text.
double perplexity(const ModelSnapshot& snapshot, std::string_view text);

// Object-only mode: exp(mean NLL) of the tokens after `prefix`.
double conditional_perplexity(const ModelSnapshot& snapshot, std::string_view prefix, std::string_view sentence);

struct PromptEmbedding {
    Eigen::VectorXd vector;  // unit L2 norm
    bool degenerate = false; // true if the mean embedding was zero (or text empty)
};

// Mean of the sentence's input-token embeddings (BOS excluded), L2-normalised.
// A zero mean maps to the first basis vector and sets `degenerate`.
PromptEmbedding embed_prompt(const ModelSnapshot& snapshot, std::string_view text);

// Greedy decoding; ties go to the lowest token id. Returns only the generated
// continuation. Throws ConfigError when max_tokens == 0.
std::vector<TokenId> generate_ids(const ModelSnapshot& snapshot, std::string_view prompt, std::size_t max_tokens);
std::string generate(const ModelSnapshot& snapshot, std::string_view prompt, std::size_t max_tokens);

// ---- snapshot file -----------------------------------------------------
//
// Little-endian binary container:
//   8-byte magic "RPLSNAP1", u32 version, u64 vocab hash,
//   u32 length + JSON header (config, tag, dims),
//   u32 token count, then (u32 length + bytes) per token,
//   five matrices as (u64 rows, u64 cols, rows*cols f64 row-major).

void save_snapshot(const ModelSnapshot& snapshot, const std::filesystem::path& path);

// Rejects bad magic/version, a vocab whose hash does not match the header,
// and (when given) a header hash different from `expected_vocab_hash`.
ModelSnapshot load_snapshot(const std::filesystem::path& path,
                            std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);

}  // namespace ripple
