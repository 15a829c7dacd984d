// SPDX-License-Identifier: Apache-2.0
#include "mopd/peercontext/peer_context.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace mopd::peercontext {

namespace {

constexpr std::size_t kNoRollout = std::numeric_limits<std::size_t>::max();

TokenId header_token(TemplateKind kind) noexcept
{
    switch (kind) {
    case TemplateKind::Primary:
        return tok::kCtxPrimary;
    case TemplateKind::Success:
        return tok::kCtxSuccess;
    case TemplateKind::Failure:
        return tok::kCtxFailure;
    }
    return tok::kCtxEnd;
}

std::vector<std::size_t> choose(const std::vector<std::size_t>& pool, std::size_t k,
                                SelectionPolicy policy, RngStream* rng)
{
    k = std::min(k, pool.size());
    if (policy == SelectionPolicy::FirstByIndex || k == 0) {
        return {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k)};
    }
    if (!rng) {
        throw std::invalid_argument("select_peers: uniform selection needs an rng stream");
    }
    std::vector<std::size_t> shuffled = pool;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng->below(shuffled.size() - i);
        std::swap(shuffled[i], shuffled[j]);
    }
    shuffled.resize(k);
    return shuffled;
}

class ContextWriter {
public:
    ContextWriter(const rollout::RolloutGroup& group, std::size_t target)
        : group_(group), target_(target)
    {
    }

    void add(TemplateKind role, std::size_t index)
    {
        if (index == target_) {
            throw std::logic_error("build_context: target rollout selected as its own peer");
        }
        const auto& ids = group_.rollouts.at(index).ids;
        if (ids.empty()) {
            return;
        }
        pending_.push_back({role, index, render_template(role, ids)});
    }

    void add_raw(TemplateKind role, std::vector<TokenId> tokens)
    {
        pending_.push_back({role, kNoRollout, std::move(tokens)});
    }

    PeerContext finish(Rung rung, std::size_t budget)
    {
        std::size_t total = 0;
        for (const auto& b : pending_) {
            total += b.tokens.size();
        }
        PeerContext ctx;
        while (!pending_.empty() && total > budget) {
            total -= pending_.back().tokens.size();
            pending_.pop_back();
            ++ctx.dropped_blocks;
        }
        for (auto& b : pending_) {
            ctx.blocks.push_back({b.role, b.index, ctx.tokens.size(), b.tokens.size()});
            ctx.tokens.insert(ctx.tokens.end(), b.tokens.begin(), b.tokens.end());
        }
        ctx.rung = ctx.blocks.empty() && rung != Rung::Analysis ? Rung::NoPeer : rung;
        return ctx;
    }

private:
    struct Pending {
        TemplateKind role;
        std::size_t index;
        std::vector<TokenId> tokens;
    };
    const rollout::RolloutGroup& group_;
    std::size_t target_;
    std::vector<Pending> pending_;
};

PeerContext build_gated(bool with_success, bool with_failure, const rollout::RolloutGroup& group,
                        const rollout::PeerSets& peers, const SelectionConfig& cfg,
                        std::size_t budget, RngStream* rng)
{
    const Selection sel = select_peers(peers, cfg.success_count,
                                       with_failure ? cfg.failure_count : 0, cfg.policy, rng);
    ContextWriter w(group, peers.target);
    Rung rung = Rung::NoPeer;
    if (!sel.successes.empty()) {
        w.add(TemplateKind::Primary, sel.successes.front());
        if (with_success) {
            for (std::size_t k = 1; k < sel.successes.size(); ++k) {
                w.add(TemplateKind::Success, sel.successes[k]);
            }
        }
        for (std::size_t f : sel.failures) {
            w.add(TemplateKind::Failure, f);
        }
        rung = sel.failures.empty() ? Rung::PositiveOnly : Rung::Contrastive;
    } else if (with_failure && !sel.failures.empty()) {
        for (std::size_t f : sel.failures) {
            w.add(TemplateKind::Failure, f);
        }
        rung = Rung::FailureOnly;
    }
    PeerContext ctx = w.finish(rung, budget);
    ctx.success_shortfall = sel.success_shortfall;
    ctx.failure_shortfall = sel.failure_shortfall;
    return ctx;
}

PeerContext build_analysis(AnalysisCondition c, const rollout::RolloutGroup& group,
                           const rollout::PeerSets& peers, std::size_t budget)
{
    std::size_t want_success = 0, want_failure = 0;
    switch (c) {
    case AnalysisCondition::Base:
    case AnalysisCondition::AllRollouts:
        break;
    case AnalysisCondition::OneSuccess:
        want_success = 1;
        break;
    case AnalysisCondition::TwoSuccess:
        want_success = 2;
        break;
    case AnalysisCondition::OneFailure:
        want_failure = 1;
        break;
    case AnalysisCondition::OneSuccessOneFailure:
        want_success = want_failure = 1;
        break;
    case AnalysisCondition::TwoSuccessOneFailure:
        want_success = 2;
        want_failure = 1;
        break;
    }
    ContextWriter w(group, peers.target);
    Selection sel;
    if (c == AnalysisCondition::AllRollouts) {
        // Every peer in index order; the lowest-index success is the primary.
        bool primary_done = false;
        for (std::size_t i = 0; i < group.size(); ++i) {
            if (i == peers.target) {
                continue;
            }
            if (std::binary_search(peers.success_peers.begin(), peers.success_peers.end(), i)) {
                w.add(primary_done ? TemplateKind::Success : TemplateKind::Primary, i);
                primary_done = true;
            } else {
                w.add(TemplateKind::Failure, i);
            }
        }
    } else {
        sel = select_peers(peers, want_success, want_failure, SelectionPolicy::FirstByIndex);
        for (std::size_t k = 0; k < sel.successes.size(); ++k) {
            w.add(k == 0 ? TemplateKind::Primary : TemplateKind::Success, sel.successes[k]);
        }
        for (std::size_t f : sel.failures) {
            w.add(TemplateKind::Failure, f);
        }
    }
    PeerContext ctx = w.finish(Rung::Analysis, budget);
    ctx.success_shortfall = sel.success_shortfall;
    ctx.failure_shortfall = sel.failure_shortfall;
    return ctx;
}

} // namespace

std::vector<TokenId> render_template(TemplateKind kind, std::span<const TokenId> rollout)
{
    if (rollout.empty()) {
        throw std::invalid_argument("render_template: empty rollout");
    }
    std::vector<TokenId> out;
    out.reserve(rollout.size() + 2);
    out.push_back(header_token(kind));
    out.insert(out.end(), rollout.begin(), rollout.end());
    out.push_back(tok::kCtxEnd);
    return out;
}

std::string_view condition_name(AnalysisCondition c) noexcept
{
    switch (c) {
    case AnalysisCondition::Base:
        return "base";
    case AnalysisCondition::OneSuccess:
        return "1-success";
    case AnalysisCondition::TwoSuccess:
        return "2-success";
    case AnalysisCondition::OneFailure:
        return "1-failure";
    case AnalysisCondition::OneSuccessOneFailure:
        return "1-success+1-failure";
    case AnalysisCondition::TwoSuccessOneFailure:
        return "2-success+1-failure";
    case AnalysisCondition::AllRollouts:
        return "all-rollouts";
    }
    return "?";
}

std::string_view rung_name(Rung r) noexcept
{
    switch (r) {
    case Rung::Contrastive:
        return "contrastive";
    case Rung::PositiveOnly:
        return "positive-only";
    case Rung::FailureOnly:
        return "failure-only";
    case Rung::NoPeer:
        return "no-peer";
    case Rung::Feedback:
        return "feedback";
    case Rung::Analysis:
        return "analysis";
    }
    return "?";
}

std::vector<std::size_t> PeerContext::included_rollouts() const
{
    std::vector<std::size_t> out;
    for (const ContextBlock& b : blocks) {
        if (b.rollout_index != kNoRollout) {
            out.push_back(b.rollout_index);
        }
    }
    return out;
}

Selection select_peers(const rollout::PeerSets& peers, std::size_t success_count,
                       std::size_t failure_count, SelectionPolicy policy, RngStream* rng)
{
    Selection sel;
    sel.successes = choose(peers.success_peers, success_count, policy, rng);
    sel.failures = choose(peers.failure_peers, failure_count, policy, rng);
    sel.success_shortfall = sel.successes.size() < success_count;
    sel.failure_shortfall = sel.failures.size() < failure_count;
    return sel;
}

PeerContext build_context(const ContextVariant& variant, const rollout::RolloutGroup& group,
                          const rollout::PeerSets& peers, const SelectionConfig& selection,
                          std::size_t budget, RngStream* rng)
{
    using Kind = ContextVariant::Kind;
    switch (variant.kind) {
    case Kind::NoPeer:
        return {};
    case Kind::PositiveOnly:
        return build_gated(true, false, group, peers, selection, budget, rng);
    case Kind::Contrastive:
        return build_gated(true, true, group, peers, selection, budget, rng);
    case Kind::Gated:
        return build_gated(variant.gate_success, variant.gate_failure, group, peers, selection,
                           budget, rng);
    case Kind::Analysis:
        return build_analysis(variant.condition, group, peers, budget);
    }
    throw std::invalid_argument("build_context: unknown variant");
}

TokenId feedback_token(tasks::FailureReason reason) noexcept
{
    switch (reason) {
    case tasks::FailureReason::None:
        return tok::kFbCorrect;
    case tasks::FailureReason::NoAnswerBlock:
        return tok::kFbNoAnswer;
    case tasks::FailureReason::ParseError:
        return tok::kFbParseError;
    case tasks::FailureReason::WrongValue:
        return tok::kFbWrongValue;
    }
    return tok::kFbWrongValue;
}

PeerContext build_feedback_context(const rollout::RolloutGroup& group,
                                   const rollout::PeerSets& peers, std::size_t budget)
{
    if (!group.scored || group.reasons.size() != group.size()) {
        throw std::logic_error("build_feedback_context: group not scored");
    }
    ContextWriter w(group, peers.target);
    w.add_raw(TemplateKind::Failure,
              {tok::kFeedback, feedback_token(group.reasons[peers.target]), tok::kCtxEnd});
    if (!peers.success_peers.empty()) {
        w.add(TemplateKind::Primary, peers.success_peers.front());
    }
    PeerContext ctx = w.finish(Rung::Feedback, budget);
    ctx.success_shortfall = peers.success_peers.empty();
    return ctx;
}

std::vector<TokenId> teacher_conditioning(std::span<const TokenId> prompt, const PeerContext& context)
{
    std::vector<TokenId> out(prompt.begin(), prompt.end());
    out.insert(out.end(), context.tokens.begin(), context.tokens.end());
    return out;
}

} // namespace mopd::peercontext
