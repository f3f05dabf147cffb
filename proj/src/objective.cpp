#include "igrpo/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "igrpo/errors.hpp"

namespace igrpo {

std::vector<double> normalize_advantages(std::span<const double> rewards, StdDivisor divisor)
{
    const auto g = rewards.size();
    if (g < 2) {
        throw InvalidGroupError("advantage normalization needs at least 2 rewards, got " +
                                std::to_string(g));
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= static_cast<double>(g);

    double ss = 0.0;
    for (double r : rewards) {
        ss += (r - mean) * (r - mean);
    }
    const double denom = divisor == StdDivisor::Population ? static_cast<double>(g)
                                                           : static_cast<double>(g - 1);
    const double sd = std::sqrt(ss / denom);

    std::vector<double> out(g, 0.0);
    const bool constant = std::all_of(rewards.begin(), rewards.end(),
                                      [&](double r) { return r == rewards[0]; });
    if (constant || sd == 0.0) {
        return out;
    }
    for (std::size_t j = 0; j < g; ++j) {
        out[j] = (rewards[j] - mean) / sd;
    }
    return out;
}

double clipped_term(double ratio, double advantage, double epsilon)
{
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

double kl_estimate(double logp_ref, double logp_theta)
{
    const double log_rho = logp_ref - logp_theta;
    // expm1 keeps precision near rho = 1.
    return std::max(0.0, std::expm1(log_rho) - log_rho);
}

bool clip_indicator(double ratio, double advantage, double epsilon)
{
    if (advantage == 0.0) {
        return true;
    }
    if (advantage > 0.0) {
        return ratio <= 1.0 + epsilon;
    }
    return ratio >= 1.0 - epsilon;
}

// ---------------------------------------------------------------------------

std::size_t RolloutGroup::token_count() const
{
    std::size_t n = 0;
    for (const auto& c : completions) {
        n += c.size();
    }
    return n;
}

void RolloutGroup::validate() const
{
    const auto g = completions.size();
    if (g < 2) {
        throw InvalidGroupError("rollout group needs at least 2 completions");
    }
    if (rewards.size() != g || advantages.size() != g) {
        throw AlignmentError("rewards/advantages do not match completion count");
    }
    if (oldLogProbs.size() != g || refLogProbs.size() != g) {
        throw AlignmentError("cached log-prob lists do not match completion count");
    }
    for (std::size_t j = 0; j < g; ++j) {
        if (oldLogProbs[j].size() != completions[j].size() ||
            refLogProbs[j].size() != completions[j].size()) {
            throw AlignmentError("cached log-probs misaligned with tokens of completion " +
                                 std::to_string(j));
        }
    }
}

std::vector<double> completion_log_probs(const PolicyParams& params,
                                         std::span<const Token> context,
                                         std::span<const Token> completion)
{
    TokenSequence ctx(context.begin(), context.end());
    ctx.reserve(context.size() + completion.size());
    std::vector<double> out;
    out.reserve(completion.size());
    for (Token t : completion) {
        out.push_back(log_prob(params, ctx, t));
        ctx.push_back(t);
    }
    return out;
}

RolloutGroup make_group(TokenSequence context, std::vector<TokenSequence> completions,
                        std::vector<double> rewards, const PolicyParams& snapshot,
                        const PolicyParams& reference, StdDivisor divisor)
{
    if (completions.size() != rewards.size()) {
        throw AlignmentError("one reward per completion required");
    }
    RolloutGroup g;
    g.advantages = normalize_advantages(rewards, divisor);
    g.oldLogProbs.reserve(completions.size());
    g.refLogProbs.reserve(completions.size());
    for (const auto& c : completions) {
        g.oldLogProbs.push_back(completion_log_probs(snapshot, context, c));
        g.refLogProbs.push_back(completion_log_probs(reference, context, c));
    }
    g.context = std::move(context);
    g.completions = std::move(completions);
    g.rewards = std::move(rewards);
    return g;
}

// ---------------------------------------------------------------------------

TokenTermOutput clipped_kl_term(const TokenTermInput& in, const SurrogateOptions& opts)
{
    TokenTermOutput out;
    out.unclipped = clip_indicator(in.ratio, in.advantage, opts.epsilon);
    const double kl = std::max(0.0, std::expm1(in.logRefRatio) - in.logRefRatio);
    out.value = clipped_term(in.ratio, in.advantage, opts.epsilon) - opts.beta * kl;
    out.coefficient = (out.unclipped ? in.advantage * in.ratio : 0.0) +
                      opts.beta * (in.refRatio - 1.0);
    return out;
}

SurrogateReport surrogate(std::span<const RolloutGroup> groups, const PolicyParams& theta,
                          const SurrogateOptions& opts)
{
    SurrogateReport rep;
    rep.gradient = WeightMatrix(theta.weights.rows(), theta.weights.cols());
    if (groups.empty()) {
        return rep;
    }
    const TokenTerm& term = opts.term ? opts.term : TokenTerm(clipped_kl_term);

    std::size_t unclipped = 0;
    double kl_sum = 0.0;
    const double group_weight = 1.0 / static_cast<double>(groups.size());

    for (const auto& grp : groups) {
        grp.validate();
        const double completion_weight = group_weight / static_cast<double>(grp.size());
        TokenSequence ctx;
        for (std::size_t j = 0; j < grp.size(); ++j) {
            const auto& comp = grp.completions[j];
            if (comp.empty()) {
                continue;
            }
            const double token_weight = completion_weight / static_cast<double>(comp.size());
            ctx.assign(grp.context.begin(), grp.context.end());
            for (std::size_t t = 0; t < comp.size(); ++t) {
                const auto dist = next_token_distribution(theta, ctx);
                const double logp = dist.logProbs[static_cast<std::size_t>(comp[t])];
                const double log_ref_ratio = grp.refLogProbs[j][t] - logp;

                TokenTermInput in{importance_ratio(logp, grp.oldLogProbs[j][t]),
                                  grp.advantages[j], std::exp(log_ref_ratio), log_ref_ratio};
                const auto out = term(in, opts);

                rep.value += token_weight * out.value;
                accumulate_grad_log_prob(dist, comp[t], token_weight * out.coefficient,
                                         rep.gradient);
                unclipped += out.unclipped ? 1 : 0;
                kl_sum += std::max(0.0, std::expm1(log_ref_ratio) - log_ref_ratio);
                ++rep.tokens;
                ctx.push_back(comp[t]);
            }
        }
    }
    if (rep.tokens > 0) {
        rep.clipFraction = 1.0 - static_cast<double>(unclipped) / static_cast<double>(rep.tokens);
        rep.meanKL = kl_sum / static_cast<double>(rep.tokens);
    }
    if (!rep.gradient.all_finite() || !std::isfinite(rep.value)) {
        throw NumericalStateError("surrogate produced a non-finite value or gradient");
    }
    return rep;
}

}  // namespace igrpo
