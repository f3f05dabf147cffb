#pragma once

// Group-relative advantages, clipped importance-weighted surrogate, the
// k3 KL penalty and the analytic gradient of the full surrogate.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "igrpo/policy.hpp"

namespace igrpo {

enum class StdDivisor {
    Population,  // divide by G
    Sample,      // divide by G - 1
};

/// (R_j - mean) / std within one group. All zeros when std == 0.
/// Throws InvalidGroupError for fewer than two rewards.
std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         StdDivisor divisor = StdDivisor::Population);

inline double importance_ratio(double logp_new, double logp_old)
{
    return std::exp(logp_new - logp_old);
}

double clipped_term(double ratio, double advantage, double epsilon);

/// rho - ln rho - 1 with rho = pi_ref / pi_theta, from log-probs.
double kl_estimate(double logp_ref, double logp_theta);

/// 1 on the unclipped branch. Ratios exactly at 1 +/- epsilon count as
/// unclipped, and so does every ratio when the advantage is zero.
bool clip_indicator(double ratio, double advantage, double epsilon);

/// One prompt context and the completions sampled for it.
struct RolloutGroup {
    TokenSequence context;
    std::vector<TokenSequence> completions;
    std::vector<double> rewards;
    std::vector<double> advantages;
    // Per-token log-probs cached at sampling time, aligned with completions.
    std::vector<std::vector<double>> oldLogProbs;
    std::vector<std::vector<double>> refLogProbs;

    std::size_t size() const { return completions.size(); }
    std::size_t token_count() const;
    /// Throws InvalidGroupError / AlignmentError on shape problems.
    void validate() const;
};

/// Per-token log-probs of a completion continuing a context.
std::vector<double> completion_log_probs(const PolicyParams& params,
                                         std::span<const Token> context,
                                         std::span<const Token> completion);

/// Fill advantages and both log-prob caches for a freshly sampled group.
RolloutGroup make_group(TokenSequence context, std::vector<TokenSequence> completions,
                        std::vector<double> rewards, const PolicyParams& snapshot,
                        const PolicyParams& reference,
                        StdDivisor divisor = StdDivisor::Population);

struct TokenTermInput {
    double ratio;       // pi_theta / pi_old
    double advantage;
    double refRatio;    // pi_ref / pi_theta
    double logRefRatio;
};

struct TokenTermOutput {
    double value;        // per-token objective contribution
    double coefficient;  // multiplies grad log pi_theta(token)
    bool unclipped;
};

struct SurrogateOptions;

/// Per-token objective. The default is the clipped surrogate minus
/// beta * k3; alternative base updates plug in here.
using TokenTerm = std::function<TokenTermOutput(const TokenTermInput&, const SurrogateOptions&)>;

struct SurrogateOptions {
    double epsilon = 0.2;
    double beta = 0.0;
    TokenTerm term;  // empty -> clipped_kl_term
};

TokenTermOutput clipped_kl_term(const TokenTermInput& in, const SurrogateOptions& opts);

struct SurrogateReport {
    double value = 0.0;
    WeightMatrix gradient;
    double clipFraction = 0.0;
    double meanKL = 0.0;
    std::size_t tokens = 0;
};

/// Objective value averaged over groups, each group being
/// (1/G) sum_j (1/|o_j|) sum_t [term], and its exact gradient w.r.t. the
/// policy weights. Summation order is fixed so results are reproducible.
SurrogateReport surrogate(std::span<const RolloutGroup> groups, const PolicyParams& theta,
                          const SurrogateOptions& opts);

}  // namespace igrpo
