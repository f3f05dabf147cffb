#pragma once

// Two-stage rollout collection: Stage-1 drafts from the snapshot, best-draft
// selection, prompt augmentation, Stage-2 group sampling on the augmented
// prompt. Only the Stage-2 group is returned for the update.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "igrpo/objective.hpp"
#include "igrpo/policy.hpp"

namespace igrpo {

struct BudgetSplit {
    int drafts = 4;         // N
    int groupSize = 4;      // G
    int grpoGroupSize = 8;  // G_grpo

    int per_prompt() const { return drafts + groupSize; }
    bool matched() const { return drafts + groupSize == grpoGroupSize; }
    /// Throws ConfigError. With require_matched, N + G must equal G_grpo.
    void validate(bool require_matched) const;
};

/// (N + G) / G_grpo.
double budget_ratio(const BudgetSplit& split);

struct DraftSet {
    std::vector<TokenSequence> drafts;
    std::vector<double> rewards;
    std::size_t selectedIndex = 0;

    bool empty() const { return drafts.empty(); }
    double best_reward() const { return rewards.at(selectedIndex); }
};

struct AugmentedPrompt {
    TokenSequence tokens;
    std::size_t originalPromptLength = 0;
    std::size_t draftLength = 0;  // after truncation
};

using RewardFn = std::function<double(std::span<const Token>)>;

std::vector<TokenSequence> generate_drafts(const Sampler& sampler, std::span<const Token> prompt,
                                           int count, Rng& rng);

/// Smallest index attaining the maximum. Throws InvalidInputError if empty.
std::size_t select_best_draft(std::span<const double> rewards);
std::size_t select_best_draft(std::span<const TokenSequence> drafts, std::span<const double> rewards);

/// prompt ++ [SEP_DRAFT] ++ draft ++ [SEP_REFINE]. An oversize draft loses
/// tokens from its end; the prompt is never cut.
AugmentedPrompt concat_prompt(std::span<const Token> prompt, std::span<const Token> draft,
                              std::size_t max_prompt_len, const Vocabulary& vocab);

struct CollectOptions {
    std::size_t maxPromptLen = 64;
    StdDivisor divisor = StdDivisor::Population;
    // When false and every draft scored 0, Stage 2 runs on the bare prompt.
    bool conditionOnFailedDraft = true;
};

struct Collected {
    DraftSet drafts;
    RolloutGroup group;
    std::size_t samplesDrawn = 0;
};

/// Stage 1 then Stage 2 for one prompt. With N = 0 this is plain GRPO
/// collection on the prompt. Drafts are drawn before refinements from the
/// same rng stream.
Collected igrpo_collect(const Sampler& sampler, const PolicyParams& reference,
                        std::span<const Token> prompt, const BudgetSplit& split,
                        const RewardFn& reward, const CollectOptions& opts, Rng& rng);

}  // namespace igrpo
