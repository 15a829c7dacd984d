// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include <gtest/gtest.h>

#include "mopd/peercontext/peer_context.hpp"

namespace {

using namespace mopd;
using namespace mopd::peercontext;

/// Rollout i is the single digit i, so every block is three tokens.
rollout::RolloutGroup group_with(std::vector<double> rewards)
{
    rollout::RolloutGroup g;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        g.rollouts.push_back(TokenSequence{{tok::digit(static_cast<int>(i))}});
    }
    rollout::partition(g, rewards, 0.5);
    return g;
}

std::vector<std::pair<TemplateKind, std::size_t>> layout(const PeerContext& c)
{
    std::vector<std::pair<TemplateKind, std::size_t>> out;
    for (const auto& b : c.blocks) {
        out.emplace_back(b.role, b.rollout_index);
    }
    return out;
}

constexpr auto P = TemplateKind::Primary;
constexpr auto S = TemplateKind::Success;
constexpr auto F = TemplateKind::Failure;

TEST(Template, HeaderBodySeparator)
{
    const std::vector<TokenId> r{tok::digit(4), tok::digit(2)};
    EXPECT_EQ(render_template(P, r), (std::vector<TokenId>{tok::kCtxPrimary, tok::digit(4), tok::digit(2), tok::kCtxEnd}));
    EXPECT_EQ(render_template(S, r).front(), tok::kCtxSuccess);
    EXPECT_EQ(render_template(F, r).front(), tok::kCtxFailure);
    EXPECT_THROW(render_template(P, std::vector<TokenId>{}), std::invalid_argument);
}

TEST(Selection, FirstByIndexAndShortfall)
{
    const auto g = group_with({1, 0, 1, 1, 0, 1});
    const auto peers = rollout::peer_sets(g, 0);
    const auto sel = select_peers(peers, 2, 3, SelectionPolicy::FirstByIndex);
    EXPECT_EQ(sel.successes, (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(sel.failures, (std::vector<std::size_t>{1, 4}));
    EXPECT_FALSE(sel.success_shortfall);
    EXPECT_TRUE(sel.failure_shortfall);
}

TEST(Selection, UniformDrawsDistinctPeersReproducibly)
{
    const auto g = group_with({1, 1, 1, 1, 1, 1, 0, 0});
    const auto peers = rollout::peer_sets(g, 3);
    RngStream a(5), b(5);
    const auto x = select_peers(peers, 3, 1, SelectionPolicy::UniformRandom, &a);
    const auto y = select_peers(peers, 3, 1, SelectionPolicy::UniformRandom, &b);
    EXPECT_EQ(x.successes, y.successes);
    ASSERT_EQ(x.successes.size(), 3u);
    auto sorted = x.successes;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    for (auto s : x.successes) {
        EXPECT_NE(s, 3u);
        EXPECT_TRUE(g.is_success(s));
    }
    EXPECT_THROW(select_peers(peers, 1, 0, SelectionPolicy::UniformRandom, nullptr), std::invalid_argument);
}

TEST(Ladder, FallsBackRungByRung)
{
    const SelectionConfig sel{2, 1, SelectionPolicy::FirstByIndex};
    const auto contrastive = ContextVariant::contrastive();
    {
        const auto g = group_with({0, 1, 0, 1});
        const auto c = build_context(contrastive, g, rollout::peer_sets(g, 0), sel, 100);
        EXPECT_EQ(c.rung, Rung::Contrastive);
        EXPECT_EQ(layout(c), (decltype(layout(c)){{P, 1}, {S, 3}, {F, 2}}));
        EXPECT_EQ(c.tokens.size(), 9u);
    }
    {
        const auto g = group_with({1, 1, 1});
        const auto c = build_context(contrastive, g, rollout::peer_sets(g, 1), sel, 100);
        EXPECT_EQ(c.rung, Rung::PositiveOnly);
        EXPECT_TRUE(c.failure_shortfall);
        EXPECT_EQ(layout(c), (decltype(layout(c)){{P, 0}, {S, 2}}));
    }
    {
        const auto g = group_with({0, 0, 0});
        const auto c = build_context(contrastive, g, rollout::peer_sets(g, 2), sel, 100);
        EXPECT_EQ(c.rung, Rung::FailureOnly);
        EXPECT_EQ(layout(c), (decltype(layout(c)){{F, 0}}));
    }
    {
        const auto g = group_with({1});
        const auto c = build_context(contrastive, g, rollout::peer_sets(g, 0), sel, 100);
        EXPECT_EQ(c.rung, Rung::NoPeer);
        EXPECT_TRUE(c.empty());
    }
    {
        // Positive-only never shows a failure, even when no success exists.
        const auto g = group_with({0, 0, 0});
        const auto c = build_context(ContextVariant::positive_only(), g, rollout::peer_sets(g, 1), sel, 100);
        EXPECT_EQ(c.rung, Rung::NoPeer);
        EXPECT_TRUE(c.empty());
    }
}

TEST(Budget, DropsWholeBlocksFromTheEnd)
{
    const auto g = group_with({1, 1, 1, 0});
    const SelectionConfig sel{3, 1, SelectionPolicy::FirstByIndex};
    const auto peers = rollout::peer_sets(g, 0);
    const auto full = build_context(ContextVariant::contrastive(), g, peers, sel, 100);
    ASSERT_EQ(full.tokens.size(), 9u);
    const auto cut = build_context(ContextVariant::contrastive(), g, peers, sel, 8);
    EXPECT_EQ(cut.tokens.size(), 6u);
    EXPECT_EQ(cut.dropped_blocks, 1u);
    EXPECT_TRUE(std::equal(cut.tokens.begin(), cut.tokens.end(), full.tokens.begin()));
    EXPECT_TRUE(build_context(ContextVariant::contrastive(), g, peers, sel, 2).empty());
}

TEST(Analysis, ConditionsSelectTheNamedBlocks)
{
    const auto g = group_with({0, 1, 0, 1, 1, 0});
    const auto peers = rollout::peer_sets(g, 0);
    auto at = [&](AnalysisCondition c) {
        return layout(build_context(ContextVariant::analysis(c), g, peers, {}, 1000));
    };
    using L = std::vector<std::pair<TemplateKind, std::size_t>>;
    EXPECT_EQ(at(AnalysisCondition::Base), L{});
    EXPECT_EQ(at(AnalysisCondition::OneSuccess), (L{{P, 1}}));
    EXPECT_EQ(at(AnalysisCondition::TwoSuccess), (L{{P, 1}, {S, 3}}));
    EXPECT_EQ(at(AnalysisCondition::OneFailure), (L{{F, 2}}));
    EXPECT_EQ(at(AnalysisCondition::OneSuccessOneFailure), (L{{P, 1}, {F, 2}}));
    EXPECT_EQ(at(AnalysisCondition::TwoSuccessOneFailure), (L{{P, 1}, {S, 3}, {F, 2}}));
    EXPECT_EQ(at(AnalysisCondition::AllRollouts), (L{{P, 1}, {F, 2}, {S, 3}, {S, 4}, {F, 5}}));
}

TEST(Feedback, NamesTheFailureThenShowsASuccess)
{
    auto g = group_with({0, 1});
    g.reasons = {tasks::FailureReason::WrongValue, tasks::FailureReason::None};
    const auto c = build_feedback_context(g, rollout::peer_sets(g, 0), 100);
    EXPECT_EQ(c.rung, Rung::Feedback);
    ASSERT_GE(c.tokens.size(), 3u);
    EXPECT_EQ(c.tokens[0], tok::kFeedback);
    EXPECT_EQ(c.tokens[1], tok::kFbWrongValue);
    EXPECT_EQ(c.included_rollouts(), (std::vector<std::size_t>{1}));
}

TEST(Conditioning, PromptThenContext)
{
    const auto g = group_with({0, 1});
    const auto c = build_context(ContextVariant::contrastive(), g, rollout::peer_sets(g, 0), {}, 100);
    const std::vector<TokenId> prompt{tok::kBos, tok::kSort};
    const auto seq = teacher_conditioning(prompt, c);
    ASSERT_EQ(seq.size(), prompt.size() + c.tokens.size());
    EXPECT_TRUE(std::equal(prompt.begin(), prompt.end(), seq.begin()));
    EXPECT_TRUE(std::equal(c.tokens.begin(), c.tokens.end(), seq.begin() + 2));
}

TEST(Names, AreStable)
{
    EXPECT_EQ(condition_name(AnalysisCondition::TwoSuccessOneFailure), "2-success+1-failure");
    EXPECT_EQ(rung_name(Rung::FailureOnly), "failure-only");
}

} // namespace
