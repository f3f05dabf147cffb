#pragma once

// Linear softmax autoregressive policy over a small token vocabulary.
//
// The next-token distribution at a context is softmax(W * phi(context)),
// where phi one-hot encodes each of the last k tokens (one block of |V|
// entries per window slot, slot 0 = most recent) plus a constant bias
// feature. Contexts shorter than k are left-padded with BOS.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace igrpo {

using Token = std::int32_t;
using TokenSequence = std::vector<Token>;
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits. Platform independent,
/// unlike std::uniform_real_distribution.
double uniform01(Rng& rng);

/// Unbiased integer in [0, n) by rejection; n > 0.
std::uint64_t uniform_below(Rng& rng, std::uint64_t n);

/// Fisher-Yates with uniform_below, identical on every platform.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, Rng& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

/// Independent stream for a (seed, a, b) triple via splitmix64 mixing.
Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

std::string rng_state(const Rng& rng);
Rng rng_from_state(const std::string& state);

/// Token ids. Content tokens occupy [0, size - 5); the five reserved
/// tokens take the top of the id range.
struct Vocabulary {
    int size = 16;
    Token bos = 11;
    Token eos = 12;
    Token sepDraft = 13;
    Token sepRefine = 14;
    Token ans = 15;

    static Vocabulary with_reserved_tail(int size);

    int content_size() const { return size - 5; }
    bool is_special(Token t) const;
    void validate() const;
};

struct FeatureMap {
    int window = 4;
    int vocabSize = 16;
    Token padToken = 11;

    std::size_t dimension() const { return static_cast<std::size_t>(window) * vocabSize + 1; }
    std::size_t bias_index() const { return dimension() - 1; }

    /// Indices of the non-zero (unit) features, slot order then bias.
    /// Always window + 1 entries.
    std::vector<std::size_t> active(std::span<const Token> context) const;

    /// Dense 0/1 feature vector, mostly for tests.
    std::vector<double> dense(std::span<const Token> context) const;
};

/// Row-major |V| x D matrix.
class WeightMatrix {
public:
    WeightMatrix() = default;
    WeightMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    void fill(double v);
    /// this += scale * other
    void add_scaled(const WeightMatrix& other, double scale);
    bool all_finite() const;
    double frobenius_norm() const;

    bool operator==(const WeightMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct PolicyParams {
    Vocabulary vocab;
    FeatureMap features;
    WeightMatrix weights;
    std::int64_t version = 0;

    /// Zero weights, i.e. uniform next-token distribution everywhere.
    static PolicyParams zeros(const Vocabulary& vocab, int window);

    int vocab_size() const { return vocab.size; }

    bool operator==(const PolicyParams& o) const {
        return vocab.size == o.vocab.size && features.window == o.features.window &&
               weights == o.weights && version == o.version;
    }
};

/// W * phi(context). Throws NumericalStateError on a non-finite result.
std::vector<double> logits(const PolicyParams& params, std::span<const Token> context);

/// Max-shifted log-softmax.
std::vector<double> log_softmax(std::span<const double> logits);

double log_prob(const PolicyParams& params, std::span<const Token> context, Token token);

/// d log pi(token | context) / dW = (onehot(token) - softmax) outer phi.
WeightMatrix grad_log_prob(const PolicyParams& params, std::span<const Token> context, Token token);

/// Per-context quantities needed by the surrogate in one pass.
struct NextTokenDistribution {
    std::vector<double> logProbs;
    std::vector<std::size_t> activeFeatures;
    double entropy = 0.0;
};

NextTokenDistribution next_token_distribution(const PolicyParams& params,
                                              std::span<const Token> context);

/// out += scale * grad_log_prob(token), touching only the active columns.
void accumulate_grad_log_prob(const NextTokenDistribution& dist, Token token, double scale,
                              WeightMatrix& out);

double token_entropy(const PolicyParams& params, std::span<const Token> context);

/// Ancestral sampling until EOS or max_len new tokens; the prompt is not
/// part of the result.
TokenSequence sample_sequence(const PolicyParams& params, std::span<const Token> prompt,
                              int max_len, Rng& rng, double temperature = 1.0);

/// Binds a frozen snapshot to sampling settings and counts every
/// sequence drawn through it.
class Sampler {
public:
    Sampler(const PolicyParams& params, int max_len, double temperature = 1.0);

    TokenSequence operator()(std::span<const Token> prompt, Rng& rng) const;

    const PolicyParams& params() const { return *params_; }
    int max_len() const { return maxLen_; }
    double temperature() const { return temperature_; }
    std::size_t calls() const { return calls_.load(); }

private:
    const PolicyParams* params_;
    int maxLen_;
    double temperature_;
    mutable std::atomic<std::size_t> calls_{0};
};

// Checkpoint text format:
//   igrpo-policy 1 <vocab size> <window> <version>
//   one line per vocabulary row, weights as %.17g separated by spaces
void write_policy(std::ostream& out, const PolicyParams& params);
PolicyParams read_policy(std::istream& in);

}  // namespace igrpo
