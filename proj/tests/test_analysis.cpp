#include <gtest/gtest.h>

#include <cmath>

#include "igrpo/analysis.hpp"
#include "igrpo/errors.hpp"
#include "igrpo/tasks.hpp"
#include "test_support.hpp"

using namespace igrpo;

namespace {

const Vocabulary kV = Vocabulary::with_reserved_tail(8);

// Emits [ANS, x, EOS] where x is token 0 with probability p and token 1
// otherwise. The prompt ends in a content token.
PolicyParams coin_policy(double p)
{
    auto params = PolicyParams::zeros(kV, 2);
    const auto v = static_cast<std::size_t>(kV.size);
    const auto slot1 = [&](Token t) { return v + static_cast<std::size_t>(t); };
    const auto bias = params.features.bias_index();
    for (std::size_t r = 0; r < v; ++r) {
        params.weights(r, bias) = -60.0;
    }
    // after a content token (slot 0) with no ANS behind it: ANS
    for (Token t = 0; t < kV.content_size(); ++t) {
        params.weights(static_cast<std::size_t>(kV.ans), static_cast<std::size_t>(t)) = 120.0;
    }
    // slot 0 = ANS: the coin
    const auto ans0 = static_cast<std::size_t>(kV.ans);
    params.weights(0, ans0) = 60.0 + (p > 0 ? std::log(p) : -1e3);
    params.weights(1, ans0) = 60.0 + (p < 1 ? std::log1p(-p) : -1e3);
    // slot 1 = ANS: stop
    params.weights(static_cast<std::size_t>(kV.eos), slot1(kV.ans)) = 400.0;
    return params;
}

}  // namespace

TEST(Bootstrap, Examples)
{
    EXPECT_EQ(bootstrap_probability(0.0, 7), 0.0);
    EXPECT_EQ(bootstrap_probability(1.0, 7), 1.0);
    EXPECT_EQ(bootstrap_probability(0.5, 3), 0.875);
    EXPECT_EQ(bootstrap_probability(0.37, 1), 0.37);
    EXPECT_THROW(bootstrap_probability(-0.1, 2), DomainError);
    EXPECT_THROW(bootstrap_probability(1.1, 2), DomainError);
    EXPECT_THROW(bootstrap_probability(0.5, 0), DomainError);
}

TEST(Bootstrap, GridAtTwentyPercent)
{
    const double expect[] = {0.2, 0.36, 0.5904, 0.83222784};
    const int ns[] = {1, 2, 4, 8};
    double prev = 0;
    for (int i = 0; i < 4; ++i) {
        const double v = bootstrap_probability(0.2, ns[i]);
        EXPECT_NEAR(v, expect[i], 1e-12);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(BootstrapProperty, Bounds)
{
    std::mt19937_64 gen(60);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 20000; ++i) {
        const double p = u(gen);
        const int n = 1 + static_cast<int>(gen() % 64);
        const double v = bootstrap_probability(p, n);
        EXPECT_GE(v, p - 1e-15);
        EXPECT_LE(v, std::min(1.0, n * p) + 1e-15);
    }
}

TEST(Monotonicity, Grids)
{
    std::vector<double> p;
    for (int i = 0; i <= 10; ++i) {
        p.push_back(i / 10.0);
    }
    EXPECT_TRUE(monotonicity_check(p, std::vector<int>{2}));
    EXPECT_TRUE(monotonicity_check(std::vector<double>{0.2}, std::vector<int>{1, 2, 4, 8}));
    EXPECT_TRUE(monotonicity_check(std::vector<double>{0.0}, std::vector<int>{1, 2, 4, 8}));
}

TEST(Proposition, DegenerateOutcomesAreExact)
{
    const TokenSequence prompt{kV.bos, 1};
    const TokenSequence answer{0};
    const RewardFn reward = [&](std::span<const Token> c) { return binary_reward(c, answer, kV); };
    for (double p : {0.0, 1.0}) {
        const auto params = coin_policy(p);
        const Sampler s(params, 4);
        Rng rng(61);
        const auto r = verify_proposition(s, prompt, reward, 4, 2000, rng);
        EXPECT_EQ(r.mcEstimate, p);
        EXPECT_EQ(r.p, p);
        EXPECT_EQ(r.closedForm, p);
        EXPECT_TRUE(r.within(3.0));
    }
}

TEST(Proposition, ThirtyPercentFourDrafts)
{
    const TokenSequence prompt{kV.bos, 1};
    const TokenSequence answer{0};
    const RewardFn reward = [&](std::span<const Token> c) { return binary_reward(c, answer, kV); };
    const auto params = coin_policy(0.3);
    const Sampler s(params, 4);
    Rng rng(62);
    const auto r = verify_proposition(s, prompt, reward, 4, 100000, rng);
    EXPECT_NEAR(r.p, 0.3, 0.01);
    EXPECT_TRUE(r.within(3.0)) << format_report(r);
    EXPECT_NEAR(r.mcEstimate, 1 - std::pow(0.7, 4), 0.01);
    EXPECT_EQ(s.calls(), 100000u * 5);
}

TEST(Proposition, ReportFormat)
{
    PropositionReport r;
    r.p = 0.5;
    r.n = 3;
    r.closedForm = 0.875;
    r.mcEstimate = 0.875;
    r.mcTrials = 10;
    r.stdError = 0.1;
    const auto s = format_report(r);
    EXPECT_NE(s.find("N=3"), std::string::npos);
    EXPECT_NE(s.find("closed_form=0.875"), std::string::npos);
    EXPECT_NE(s.find("within_3sigma=true"), std::string::npos);
}

TEST(Budget, ReportPrintsRatio)
{
    const auto b = budget_report({8, 8, 16});
    EXPECT_EQ(b.ratio, 1.0);
    EXPECT_EQ(b.perPromptRollouts, 16);
    EXPECT_NE(format_report(b).find("ratio=1 "), std::string::npos);
}
