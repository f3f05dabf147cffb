#include "igrpo/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "igrpo/errors.hpp"

namespace igrpo {

double bootstrap_probability(double p, int n)
{
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("success probability must lie in [0, 1]");
    }
    if (n < 1) {
        throw DomainError("draft count must be >= 1");
    }
    return 1.0 - std::pow(1.0 - p, n);
}

double PropositionReport::z_score() const
{
    const double gap = mcEstimate - closedForm;
    if (stdError == 0.0) {
        return gap == 0.0 ? 0.0 : INFINITY;
    }
    return gap / stdError;
}

bool PropositionReport::within(double sigmas) const
{
    return std::abs(z_score()) <= sigmas;
}

PropositionReport verify_proposition(const Sampler& sampler, std::span<const Token> prompt,
                                     const RewardFn& reward, int n, std::size_t trials, Rng& rng)
{
    if (n < 1) {
        throw DomainError("draft count must be >= 1");
    }
    if (trials < 1) {
        throw DomainError("need at least one trial");
    }
    std::size_t single_hits = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        single_hits += reward(sampler(prompt, rng)) > 0.5 ? 1 : 0;
    }

    std::size_t best_hits = 0;
    std::vector<double> rewards(static_cast<std::size_t>(n));
    for (std::size_t t = 0; t < trials; ++t) {
        const auto drafts = generate_drafts(sampler, prompt, n, rng);
        for (std::size_t i = 0; i < drafts.size(); ++i) {
            rewards[i] = reward(drafts[i]);
        }
        best_hits += rewards[select_best_draft(rewards)] > 0.5 ? 1 : 0;
    }

    PropositionReport r;
    const double trials_d = static_cast<double>(trials);
    r.p = static_cast<double>(single_hits) / trials_d;
    r.n = n;
    r.closedForm = bootstrap_probability(r.p, n);
    r.mcEstimate = static_cast<double>(best_hits) / trials_d;
    r.mcTrials = trials;

    // Independent estimates: variance of the selected-draft mean plus the
    // delta-method variance of the closed form evaluated at p-hat.
    const double var_mc = r.closedForm * (1.0 - r.closedForm) / trials_d;
    const double slope = n * std::pow(1.0 - r.p, n - 1);
    const double var_cf = slope * slope * r.p * (1.0 - r.p) / trials_d;
    r.stdError = std::sqrt(var_mc + var_cf);
    return r;
}

bool monotonicity_check(std::span<const double> p_grid, std::span<const int> n_grid)
{
    for (int n : n_grid) {
        double prev = -1.0;
        for (double p : p_grid) {
            const double v = bootstrap_probability(p, n);
            if (v < prev) {
                return false;
            }
            prev = v;
        }
    }
    for (double p : p_grid) {
        if (p <= 0.0) {
            continue;
        }
        double prev = -1.0;
        for (int n : n_grid) {
            const double v = bootstrap_probability(p, n);
            if (v < prev) {
                return false;
            }
            prev = v;
        }
    }
    return true;
}

std::string format_report(const PropositionReport& r)
{
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "p=%.17g N=%d closed_form=%.17g mc_estimate=%.17g mc_trials=%zu std_error=%.17g "
                  "z=%.6f within_3sigma=%s",
                  r.p, r.n, r.closedForm, r.mcEstimate, r.mcTrials, r.stdError, r.z_score(),
                  r.within(3.0) ? "true" : "false");
    return buf;
}

BudgetReport budget_report(const BudgetSplit& split)
{
    return BudgetReport{split, budget_ratio(split), split.per_prompt()};
}

std::string format_report(const BudgetReport& r)
{
    char buf[200];
    std::snprintf(buf, sizeof(buf), "N=%d G=%d G_grpo=%d per_prompt=%d ratio=%.17g matched=%s",
                  r.split.drafts, r.split.groupSize, r.split.grpoGroupSize, r.perPromptRollouts,
                  r.ratio, r.split.matched() ? "true" : "false");
    return buf;
}

}  // namespace igrpo
