// SPDX-License-Identifier: Apache-2.0
// Peer-context algebra and diversity metric sanity.
#include <algorithm>
#include <set>

#include "mopd/analysis/diversity.hpp"
#include "mopd/peercontext/peer_context.hpp"
#include "support.hpp"

namespace acceptance {

namespace {

using namespace mopd;
using peercontext::ContextVariant;
using peercontext::PeerContext;
using peercontext::SelectionConfig;
using peercontext::SelectionPolicy;

bool same_context(const PeerContext& a, const PeerContext& b)
{
    if (a.tokens != b.tokens || a.rung != b.rung || a.dropped_blocks != b.dropped_blocks ||
        a.success_shortfall != b.success_shortfall || a.failure_shortfall != b.failure_shortfall ||
        a.blocks.size() != b.blocks.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        const auto& x = a.blocks[i];
        const auto& y = b.blocks[i];
        if (x.role != y.role || x.rollout_index != y.rollout_index || x.begin != y.begin || x.length != y.length) {
            return false;
        }
    }
    return true;
}

/// Empty string when the context is well formed for this target and budget.
std::string audit(const PeerContext& c, const rollout::RolloutGroup& g, std::size_t target, std::size_t budget)
{
    if (c.tokens.size() > budget) {
        return cat("budget ", budget, " exceeded with ", c.tokens.size(), " tokens");
    }
    std::size_t at = 0;
    for (const auto& b : c.blocks) {
        if (b.rollout_index == target) {
            return cat("target ", target, " cited ");
        }
        if (b.rollout_index >= g.size()) {
            return "block cites a rollout outside the group";
        }
        const bool success = g.is_success(b.rollout_index);
        if (success != (b.role != peercontext::TemplateKind::Failure)) {
            return "block role disagrees with the partition";
        }
        const auto expected = peercontext::render_template(b.role, g.rollouts[b.rollout_index].ids);
        if (b.begin != at || b.length != expected.size() ||
            !std::equal(expected.begin(), expected.end(), c.tokens.begin() + static_cast<std::ptrdiff_t>(at))) {
            return "block tokens do not render the cited rollout";
        }
        at += b.length;
    }
    if (at != c.tokens.size()) {
        return "context has tokens outside its blocks";
    }
    return {};
}

Outcome peer_context_algebra()
{
    RngStream gen(0xC8);
    constexpr std::size_t kBudgets[] = {0, 2, 5, 9, 14, 20, 32, 1000};
    std::size_t contexts = 0;
    for (std::size_t n = 1; n <= 8; ++n) {
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            // Rollout i carries a marker so a self-citation can also be caught by content.
            rollout::RolloutGroup g;
            g.prompt_id = gen.next_u64();
            std::vector<double> rewards;
            for (std::size_t i = 0; i < n; ++i) {
                TokenSequence seq;
                seq.ids.push_back(tok::digit(static_cast<int>(i)));
                for (std::size_t extra = gen.below(4); extra > 0; --extra) {
                    seq.ids.push_back(static_cast<TokenId>(gen.below(tok::kVocabSize)));
                }
                g.rollouts.push_back(seq);
                rewards.push_back((mask >> i) & 1u ? 1.0 : 0.0);
            }
            rollout::partition(g, rewards, 0.5);
            for (std::size_t target = 0; target < n; ++target) {
                const auto peers = rollout::peer_sets(g, target);
                for (std::size_t s = 1; s <= 3; ++s) {
                    for (std::size_t f = 0; f <= 2; ++f) {
                        for (const auto policy : {SelectionPolicy::FirstByIndex, SelectionPolicy::UniformRandom}) {
                            const SelectionConfig sel{s, f, policy};
                            for (const std::size_t budget : kBudgets) {
                                const std::uint64_t key = gen.next_u64();
                                auto build = [&](const ContextVariant& v) {
                                    RngStream rng(key);
                                    return peercontext::build_context(v, g, peers, sel, budget, &rng);
                                };
                                const auto pos = build(ContextVariant::positive_only());
                                const auto g10 = build(ContextVariant::gated(true, false));
                                const auto con = build(ContextVariant::contrastive());
                                const auto g11 = build(ContextVariant::gated(true, true));
                                const auto g01 = build(ContextVariant::gated(false, true));
                                const auto none = build(ContextVariant::no_peer());
                                const std::string where =
                                    cat(" (N ", n, " mask ", mask, " target ", target, " s ", s, " f ", f,
                                        " budget ", budget, ")");
                                if (!same_context(pos, g10)) {
                                    return {false, "PositiveOnly differs from Gated(1,0)" + where};
                                }
                                if (!same_context(con, g11)) {
                                    return {false, "Contrastive differs from Gated(1,1)" + where};
                                }
                                if (!none.empty()) {
                                    return {false, "NoPeer produced tokens" + where};
                                }
                                for (const auto* c : {&pos, &con, &g01}) {
                                    if (const auto why = audit(*c, g, target, budget); !why.empty()) {
                                        return {false, why + where};
                                    }
                                }
                                contexts += 6;
                            }
                        }
                    }
                }
            }
        }
    }
    return {true, cat(contexts, " contexts over every partition of N <= 8")};
}

Outcome diversity_sanity()
{
    RngStream gen(0xCA);
    std::size_t sets = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TokenId> r(1 + gen.below(12));
        for (auto& t : r) {
            t = static_cast<TokenId>(gen.below(tok::kVocabSize));
        }
        const std::size_t copies = 1 + gen.below(8);
        const std::vector<std::vector<TokenId>> same(copies, r);
        const std::size_t unique = std::set<TokenId>(r.begin(), r.end()).size();
        const double expected = static_cast<double>(unique) / static_cast<double>(copies * r.size());
        const double got = analysis::distinct_n(same, 1);
        if (got != expected) {
            return {false, cat("Distinct-1 ", got, " expected ", expected, " for ", copies, " copies of length ",
                                r.size())};
        }
        ++sets;
    }
    // All-distinct responses of length T repeated M times give exactly 1/M.
    for (std::size_t copies = 1; copies <= 8; ++copies) {
        std::vector<TokenId> r;
        for (int d = 0; d < 10; ++d) {
            r.push_back(tok::digit(d));
        }
        const std::vector<std::vector<TokenId>> same(copies, r);
        if (analysis::distinct_n(same, 1) != 1.0 / static_cast<double>(copies)) {
            return {false, cat("Distinct-1 of ", copies, " distinct-token copies is not 1/", copies)};
        }
    }

    for (const char* text : {"1+2", "(3*4)+5", "2*(3+4)*5", "7"}) {
        auto body = *tasks::expression_tokens(text);
        std::vector<TokenId> response{tok::kAnsOpen};
        response.insert(response.end(), body.begin(), body.end());
        response.push_back(tok::kAnsClose);
        for (std::size_t copies = 2; copies <= 6; ++copies) {
            const std::vector<std::vector<TokenId>> same(copies, response);
            const auto report = analysis::diversity(same);
            if (!report.ast_jaccard || *report.ast_jaccard != 0.0 || report.parsed != copies) {
                return {false, cat("identical '", text, "' responses do not give AST Jaccard 0")};
            }
        }
    }

    analysis::NodeMultiset a{}, b{};
    a[static_cast<std::size_t>(tasks::AstNodeType::Add)] = 1;
    a[static_cast<std::size_t>(tasks::AstNodeType::Num)] = 2;
    b[static_cast<std::size_t>(tasks::AstNodeType::Add)] = 1;
    b[static_cast<std::size_t>(tasks::AstNodeType::Mul)] = 1;
    b[static_cast<std::size_t>(tasks::AstNodeType::Num)] = 2;
    const double d = analysis::jaccard_distance(a, b);
    if (d != 0.25 || analysis::jaccard_distance(b, a) != 0.25) {
        return {false, cat("hand case gives ", d, " instead of 0.25")};
    }
    return {true, cat(sets, " identical sets, hand case exactly 0.25")};
}

} // namespace

std::vector<Criterion> algebra_criteria()
{
    return {
        {8, "peer-context algebra, budget and self-citation", 120.0, peer_context_algebra},
        {10, "diversity metric sanity", 10.0, diversity_sanity},
    };
}

} // namespace acceptance
