#include "igrpo/igrpo.hpp"

#include <algorithm>
#include <string>

#include "igrpo/errors.hpp"

namespace igrpo {

void BudgetSplit::validate(bool require_matched) const
{
    if (drafts < 0) {
        throw ConfigError("num_drafts must be >= 0");
    }
    if (groupSize < 2) {
        throw ConfigError("group_size must be >= 2");
    }
    if (grpoGroupSize < 1) {
        throw ConfigError("grpo_group_size must be >= 1");
    }
    if (require_matched && !matched()) {
        throw ConfigError("matched budget requires num_drafts + group_size == grpo_group_size (" +
                          std::to_string(drafts) + " + " + std::to_string(groupSize) +
                          " != " + std::to_string(grpoGroupSize) + ")");
    }
}

double budget_ratio(const BudgetSplit& split)
{
    if (split.grpoGroupSize < 1) {
        throw DomainError("grpo_group_size must be >= 1");
    }
    return static_cast<double>(split.drafts + split.groupSize) /
           static_cast<double>(split.grpoGroupSize);
}

std::vector<TokenSequence> generate_drafts(const Sampler& sampler, std::span<const Token> prompt,
                                           int count, Rng& rng)
{
    std::vector<TokenSequence> drafts;
    drafts.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        drafts.push_back(sampler(prompt, rng));
    }
    return drafts;
}

std::size_t select_best_draft(std::span<const double> rewards)
{
    if (rewards.empty()) {
        throw InvalidInputError("cannot select a best draft from an empty set");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < rewards.size(); ++i) {
        if (rewards[i] > rewards[best]) {
            best = i;
        }
    }
    return best;
}

std::size_t select_best_draft(std::span<const TokenSequence> drafts, std::span<const double> rewards)
{
    if (drafts.size() != rewards.size()) {
        throw InvalidInputError("one reward per draft required");
    }
    return select_best_draft(rewards);
}

AugmentedPrompt concat_prompt(std::span<const Token> prompt, std::span<const Token> draft,
                              std::size_t max_prompt_len, const Vocabulary& vocab)
{
    if (prompt.empty()) {
        throw InvalidInputError("prompt must be non-empty");
    }
    const std::size_t fixed = prompt.size() + 2;
    if (fixed > max_prompt_len) {
        throw PromptTooLongError("prompt of length " + std::to_string(prompt.size()) +
                                 " plus separators exceeds max_prompt_len " +
                                 std::to_string(max_prompt_len));
    }
    const std::size_t keep = std::min(draft.size(), max_prompt_len - fixed);

    AugmentedPrompt ap;
    ap.originalPromptLength = prompt.size();
    ap.draftLength = keep;
    ap.tokens.reserve(fixed + keep);
    ap.tokens.assign(prompt.begin(), prompt.end());
    ap.tokens.push_back(vocab.sepDraft);
    ap.tokens.insert(ap.tokens.end(), draft.begin(), draft.begin() + static_cast<std::ptrdiff_t>(keep));
    ap.tokens.push_back(vocab.sepRefine);
    return ap;
}

Collected igrpo_collect(const Sampler& sampler, const PolicyParams& reference,
                        std::span<const Token> prompt, const BudgetSplit& split,
                        const RewardFn& reward, const CollectOptions& opts, Rng& rng)
{
    split.validate(false);
    const auto& vocab = sampler.params().vocab;
    Collected out;

    TokenSequence context(prompt.begin(), prompt.end());
    if (split.drafts > 0) {
        out.drafts.drafts = generate_drafts(sampler, prompt, split.drafts, rng);
        out.samplesDrawn += out.drafts.drafts.size();
        out.drafts.rewards.reserve(out.drafts.drafts.size());
        for (const auto& d : out.drafts.drafts) {
            out.drafts.rewards.push_back(reward(d));
        }
        out.drafts.selectedIndex = select_best_draft(out.drafts.drafts, out.drafts.rewards);
        if (opts.conditionOnFailedDraft || out.drafts.best_reward() > 0.0) {
            context = concat_prompt(prompt, out.drafts.drafts[out.drafts.selectedIndex],
                                    opts.maxPromptLen, vocab)
                          .tokens;
        }
    }

    std::vector<TokenSequence> completions;
    std::vector<double> rewards;
    completions.reserve(static_cast<std::size_t>(split.groupSize));
    rewards.reserve(static_cast<std::size_t>(split.groupSize));
    for (int j = 0; j < split.groupSize; ++j) {
        completions.push_back(sampler(context, rng));
        rewards.push_back(reward(completions.back()));
    }
    out.samplesDrawn += completions.size();
    out.group = make_group(std::move(context), std::move(completions), std::move(rewards),
                           sampler.params(), reference, opts.divisor);
    return out;
}

}  // namespace igrpo
