#pragma once

// Independent reference computations used as test oracles. They go through
// dense feature vectors and textbook formulas instead of the library paths.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "igrpo/policy.hpp"

namespace igrpo::testing {

inline PolicyParams random_params(int vocab_size, int window, std::mt19937_64& gen, double scale = 1.0)
{
    auto p = PolicyParams::zeros(Vocabulary::with_reserved_tail(vocab_size), window);
    std::normal_distribution<double> normal(0.0, scale);
    for (double& w : p.weights.values()) {
        w = normal(gen);
    }
    return p;
}

inline TokenSequence random_tokens(int vocab_size, std::size_t len, std::mt19937_64& gen)
{
    std::uniform_int_distribution<int> tok(0, vocab_size - 1);
    TokenSequence s(len);
    for (auto& t : s) {
        t = tok(gen);
    }
    return s;
}

// Explicit phi: slot s holds the token s positions back, BOS when missing.
inline std::vector<double> oracle_features(const PolicyParams& p, const TokenSequence& ctx)
{
    const int k = p.features.window;
    const int v = p.vocab.size;
    std::vector<double> phi(static_cast<std::size_t>(k * v + 1), 0.0);
    for (int s = 0; s < k; ++s) {
        const long idx = static_cast<long>(ctx.size()) - 1 - s;
        const Token t = idx >= 0 ? ctx[static_cast<std::size_t>(idx)] : p.vocab.bos;
        phi[static_cast<std::size_t>(s * v + t)] = 1.0;
    }
    phi.back() = 1.0;
    return phi;
}

inline std::vector<double> oracle_logits(const PolicyParams& p, const TokenSequence& ctx)
{
    const auto phi = oracle_features(p, ctx);
    std::vector<double> z(static_cast<std::size_t>(p.vocab.size), 0.0);
    for (std::size_t r = 0; r < z.size(); ++r) {
        for (std::size_t c = 0; c < phi.size(); ++c) {
            z[r] += p.weights(r, c) * phi[c];
        }
    }
    return z;
}

inline std::vector<double> oracle_probs(const PolicyParams& p, const TokenSequence& ctx)
{
    auto z = oracle_logits(p, ctx);
    double total = 0.0;
    for (double& x : z) {
        x = std::exp(x);
        total += x;
    }
    for (double& x : z) {
        x /= total;
    }
    return z;
}

inline double max_abs(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

inline double rel_error(std::span<const double> a, std::span<const double> b)
{
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace igrpo::testing
