#include "igrpo/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "igrpo/errors.hpp"

namespace igrpo {

namespace {

std::uint64_t splitmix64(std::uint64_t& x)
{
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_below(Rng& rng, std::uint64_t n)
{
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % n;
}

Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
{
    std::uint64_t x = seed;
    std::uint64_t h = splitmix64(x);
    x = h ^ (a * 0xd1b54a32d192ed03ULL);
    h = splitmix64(x);
    x = h ^ (b * 0x8cb92ba72f3d8dd7ULL);
    h = splitmix64(x);
    return Rng{h};
}

std::string rng_state(const Rng& rng)
{
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng rng_from_state(const std::string& state)
{
    std::istringstream is(state);
    Rng rng;
    is >> rng;
    if (!is) {
        throw CheckpointError("malformed rng state");
    }
    return rng;
}

// ---------------------------------------------------------------------------

Vocabulary Vocabulary::with_reserved_tail(int size)
{
    Vocabulary v;
    v.size = size;
    v.bos = size - 5;
    v.eos = size - 4;
    v.sepDraft = size - 3;
    v.sepRefine = size - 2;
    v.ans = size - 1;
    v.validate();
    return v;
}

bool Vocabulary::is_special(Token t) const
{
    return t == bos || t == eos || t == sepDraft || t == sepRefine || t == ans;
}

void Vocabulary::validate() const
{
    if (size < 6) {
        throw ConfigError("vocabulary size must be at least 6, got " + std::to_string(size));
    }
    const Token ids[] = {bos, eos, sepDraft, sepRefine, ans};
    for (std::size_t i = 0; i < 5; ++i) {
        if (ids[i] < 0 || ids[i] >= size) {
            throw ConfigError("special token id out of range");
        }
        for (std::size_t j = i + 1; j < 5; ++j) {
            if (ids[i] == ids[j]) {
                throw ConfigError("special token ids must be distinct");
            }
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FeatureMap::active(std::span<const Token> context) const
{
    std::vector<std::size_t> idx;
    idx.reserve(static_cast<std::size_t>(window) + 1);
    const auto n = context.size();
    for (int slot = 0; slot < window; ++slot) {
        const auto s = static_cast<std::size_t>(slot);
        Token t = s < n ? context[n - 1 - s] : padToken;
        idx.push_back(s * static_cast<std::size_t>(vocabSize) + static_cast<std::size_t>(t));
    }
    idx.push_back(bias_index());
    return idx;
}

std::vector<double> FeatureMap::dense(std::span<const Token> context) const
{
    std::vector<double> phi(dimension(), 0.0);
    for (auto i : active(context)) {
        phi[i] = 1.0;
    }
    return phi;
}

// ---------------------------------------------------------------------------

void WeightMatrix::fill(double v)
{
    std::fill(data_.begin(), data_.end(), v);
}

void WeightMatrix::add_scaled(const WeightMatrix& other, double scale)
{
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += scale * other.data_[i];
    }
}

bool WeightMatrix::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double WeightMatrix::frobenius_norm() const
{
    double s = 0.0;
    for (double v : data_) {
        s += v * v;
    }
    return std::sqrt(s);
}

PolicyParams PolicyParams::zeros(const Vocabulary& vocab, int window)
{
    vocab.validate();
    if (window < 1) {
        throw ConfigError("feature window must be positive");
    }
    PolicyParams p;
    p.vocab = vocab;
    p.features = FeatureMap{window, vocab.size, vocab.bos};
    p.weights = WeightMatrix(static_cast<std::size_t>(vocab.size), p.features.dimension());
    return p;
}

// ---------------------------------------------------------------------------

namespace {

void check_tokens(const PolicyParams& params, std::span<const Token> context)
{
    if (context.empty()) {
        throw InvalidInputError("policy context must be non-empty");
    }
    for (Token t : context) {
        if (t < 0 || t >= params.vocab.size) {
            throw InvalidInputError("token id " + std::to_string(t) + " outside vocabulary");
        }
    }
}

std::vector<double> logits_from_active(const PolicyParams& params,
                                       const std::vector<std::size_t>& active)
{
    const auto rows = params.weights.rows();
    std::vector<double> z(rows, 0.0);
    for (std::size_t w = 0; w < rows; ++w) {
        double acc = 0.0;
        for (auto c : active) {
            acc += params.weights(w, c);
        }
        if (!std::isfinite(acc)) {
            throw NumericalStateError("non-finite logit for token " + std::to_string(w));
        }
        z[w] = acc;
    }
    return z;
}

}  // namespace

std::vector<double> logits(const PolicyParams& params, std::span<const Token> context)
{
    check_tokens(params, context);
    return logits_from_active(params, params.features.active(context));
}

std::vector<double> log_softmax(std::span<const double> z)
{
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) {
        s += std::exp(v - m);
    }
    const double lse = std::log(s);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = (z[i] - m) - lse;
    }
    return out;
}

NextTokenDistribution next_token_distribution(const PolicyParams& params,
                                              std::span<const Token> context)
{
    check_tokens(params, context);
    NextTokenDistribution d;
    d.activeFeatures = params.features.active(context);
    const auto z = logits_from_active(params, d.activeFeatures);

    // H = lse - sum_w p_w * z_w on max-shifted logits; exact ln|V| at z = 0.
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) {
        s += std::exp(v - m);
    }
    const double lse = std::log(s);
    d.logProbs.resize(z.size());
    double expected = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double shifted = z[i] - m;
        d.logProbs[i] = shifted - lse;
        expected += std::exp(d.logProbs[i]) * shifted;
    }
    d.entropy = std::clamp(lse - expected, 0.0, std::log(static_cast<double>(z.size())));
    return d;
}

double log_prob(const PolicyParams& params, std::span<const Token> context, Token token)
{
    if (token < 0 || token >= params.vocab.size) {
        throw InvalidInputError("token id " + std::to_string(token) + " outside vocabulary");
    }
    return next_token_distribution(params, context).logProbs[static_cast<std::size_t>(token)];
}

void accumulate_grad_log_prob(const NextTokenDistribution& dist, Token token, double scale,
                              WeightMatrix& out)
{
    const auto rows = dist.logProbs.size();
    for (std::size_t w = 0; w < rows; ++w) {
        const double indicator = static_cast<std::size_t>(token) == w ? 1.0 : 0.0;
        const double coeff = scale * (indicator - std::exp(dist.logProbs[w]));
        if (coeff == 0.0) {
            continue;
        }
        for (auto c : dist.activeFeatures) {
            out(w, c) += coeff;
        }
    }
}

WeightMatrix grad_log_prob(const PolicyParams& params, std::span<const Token> context, Token token)
{
    if (token < 0 || token >= params.vocab.size) {
        throw InvalidInputError("token id " + std::to_string(token) + " outside vocabulary");
    }
    WeightMatrix g(params.weights.rows(), params.weights.cols());
    accumulate_grad_log_prob(next_token_distribution(params, context), token, 1.0, g);
    return g;
}

double token_entropy(const PolicyParams& params, std::span<const Token> context)
{
    return next_token_distribution(params, context).entropy;
}

TokenSequence sample_sequence(const PolicyParams& params, std::span<const Token> prompt,
                              int max_len, Rng& rng, double temperature)
{
    if (max_len < 1) {
        throw InvalidInputError("max_len must be at least 1");
    }
    if (!(temperature > 0.0)) {
        throw InvalidInputError("temperature must be positive");
    }
    TokenSequence context(prompt.begin(), prompt.end());
    const auto prompt_len = context.size();
    std::vector<double> probs(static_cast<std::size_t>(params.vocab.size));
    for (int step = 0; step < max_len; ++step) {
        auto z = logits(params, context);
        if (temperature != 1.0) {
            for (double& v : z) {
                v /= temperature;
            }
        }
        const auto lp = log_softmax(z);
        const double u = uniform01(rng);
        double cdf = 0.0;
        // Fall back to the last token with positive mass if rounding leaves
        // the cumulative sum short of u.
        Token chosen = -1;
        for (std::size_t w = 0; w < lp.size(); ++w) {
            const double p = std::exp(lp[w]);
            if (p > 0.0) {
                chosen = static_cast<Token>(w);
            }
            cdf += p;
            if (u < cdf) {
                chosen = static_cast<Token>(w);
                break;
            }
        }
        context.push_back(chosen);
        if (chosen == params.vocab.eos) {
            break;
        }
    }
    return TokenSequence(context.begin() + static_cast<std::ptrdiff_t>(prompt_len), context.end());
}

Sampler::Sampler(const PolicyParams& params, int max_len, double temperature)
    : params_(&params), maxLen_(max_len), temperature_(temperature)
{
}

TokenSequence Sampler::operator()(std::span<const Token> prompt, Rng& rng) const
{
    calls_.fetch_add(1);
    return sample_sequence(*params_, prompt, maxLen_, rng, temperature_);
}

// ---------------------------------------------------------------------------

void write_policy(std::ostream& out, const PolicyParams& params)
{
    out << "igrpo-policy 1 " << params.vocab.size << ' ' << params.features.window << ' '
        << params.version << '\n';
    const auto& w = params.weights;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t c = 0; c < w.cols(); ++c) {
            if (c > 0) {
                out << ' ';
            }
            out << format_double(w(r, c));
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("failed writing policy weights");
    }
}

PolicyParams read_policy(std::istream& in)
{
    std::string magic;
    int format = 0;
    int vocab_size = 0;
    int window = 0;
    std::int64_t version = 0;
    if (!(in >> magic >> format >> vocab_size >> window >> version) || magic != "igrpo-policy") {
        throw CheckpointError("missing or malformed policy header");
    }
    if (format != 1) {
        throw CheckpointError("unsupported policy format version " + std::to_string(format));
    }
    if (vocab_size < 6 || vocab_size > 4096 || window < 1 || window > 4096) {
        throw CheckpointError("policy header has out-of-range dimensions");
    }
    PolicyParams p = PolicyParams::zeros(Vocabulary::with_reserved_tail(vocab_size), window);
    p.version = version;
    for (double& v : p.weights.values()) {
        std::string tok;
        if (!(in >> tok)) {
            throw CheckpointError("policy weights truncated");
        }
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
            throw CheckpointError("malformed weight '" + tok + "'");
        }
        if (!std::isfinite(v)) {
            throw CheckpointError("non-finite weight in checkpoint");
        }
    }
    return p;
}

}  // namespace igrpo
