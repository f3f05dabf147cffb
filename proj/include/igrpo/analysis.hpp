#pragma once

// Best-of-N bootstrapping with binary rewards: if one draft succeeds with
// probability p, the best of N i.i.d. drafts succeeds with 1 - (1 - p)^N.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "igrpo/igrpo.hpp"
#include "igrpo/policy.hpp"

namespace igrpo {

/// 1 - (1 - p)^N. Throws DomainError unless p in [0, 1] and N >= 1.
double bootstrap_probability(double p, int n);

struct PropositionReport {
    double p = 0.0;            // single-draft success estimate
    int n = 1;
    double closedForm = 0.0;   // bootstrap_probability(p, n)
    double mcEstimate = 0.0;   // mean reward of the selected draft
    std::size_t mcTrials = 0;
    double stdError = 0.0;     // combined binomial standard error of the gap

    double z_score() const;
    bool within(double sigmas) const;
};

/// Estimates p from `trials` single drafts, then E[R(best of n)] from
/// `trials` independent n-draft selections through the real sampler.
PropositionReport verify_proposition(const Sampler& sampler, std::span<const Token> prompt,
                                     const RewardFn& reward, int n, std::size_t trials, Rng& rng);

/// Non-decreasing along p for each N, and along N for each p > 0.
bool monotonicity_check(std::span<const double> p_grid, std::span<const int> n_grid);

/// `key=value` fields separated by spaces, one record per line.
std::string format_report(const PropositionReport& r);

struct BudgetReport {
    BudgetSplit split;
    double ratio = 0.0;
    int perPromptRollouts = 0;
};

BudgetReport budget_report(const BudgetSplit& split);
std::string format_report(const BudgetReport& r);

}  // namespace igrpo
