// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mopd/random.hpp"
#include "mopd/rollout/rollout.hpp"
#include "mopd/tokens.hpp"

namespace mopd::peercontext {

enum class TemplateKind : std::uint8_t { Primary, Success, Failure };

/// header token + rollout tokens + block separator. Throws on an empty rollout.
std::vector<TokenId> render_template(TemplateKind kind, std::span<const TokenId> rollout);

enum class AnalysisCondition : std::uint8_t {
    Base,
    OneSuccess,
    TwoSuccess,
    OneFailure,
    OneSuccessOneFailure,
    TwoSuccessOneFailure,
    AllRollouts,
};
inline constexpr std::array<AnalysisCondition, 7> kAnalysisConditions = {
    AnalysisCondition::Base,
    AnalysisCondition::OneSuccess,
    AnalysisCondition::TwoSuccess,
    AnalysisCondition::OneFailure,
    AnalysisCondition::OneSuccessOneFailure,
    AnalysisCondition::TwoSuccessOneFailure,
    AnalysisCondition::AllRollouts,
};
std::string_view condition_name(AnalysisCondition c) noexcept;

struct ContextVariant {
    enum class Kind : std::uint8_t { NoPeer, PositiveOnly, Contrastive, Gated, Analysis };
    Kind kind = Kind::Contrastive;
    bool gate_success = true; // Gated only
    bool gate_failure = true; // Gated only
    AnalysisCondition condition = AnalysisCondition::Base;

    static ContextVariant no_peer() { return {Kind::NoPeer, false, false, {}}; }
    static ContextVariant positive_only() { return {Kind::PositiveOnly, true, false, {}}; }
    static ContextVariant contrastive() { return {Kind::Contrastive, true, true, {}}; }
    static ContextVariant gated(bool success, bool failure) { return {Kind::Gated, success, failure, {}}; }
    static ContextVariant analysis(AnalysisCondition c) { return {Kind::Analysis, false, false, c}; }

    friend bool operator==(const ContextVariant&, const ContextVariant&) = default;
};

enum class SelectionPolicy : std::uint8_t { FirstByIndex, UniformRandom };

/// Success count includes the primary solution: 2 means y* plus one extra.
struct SelectionConfig {
    std::size_t success_count = 2;
    std::size_t failure_count = 1;
    SelectionPolicy policy = SelectionPolicy::FirstByIndex;

    friend bool operator==(const SelectionConfig&, const SelectionConfig&) = default;
};

struct Selection {
    std::vector<std::size_t> successes; // successes[0] is the primary
    std::vector<std::size_t> failures;
    bool success_shortfall = false;
    bool failure_shortfall = false;
};

/// `rng` is required for UniformRandom and ignored otherwise.
Selection select_peers(const rollout::PeerSets& peers, std::size_t success_count,
                       std::size_t failure_count, SelectionPolicy policy, RngStream* rng = nullptr);

/// Which rung of Contrastive -> PositiveOnly -> failure-only -> none produced the context.
enum class Rung : std::uint8_t { Contrastive, PositiveOnly, FailureOnly, NoPeer, Feedback, Analysis };
std::string_view rung_name(Rung r) noexcept;

struct ContextBlock {
    TemplateKind role;
    std::size_t rollout_index; // group index; npos for feedback blocks
    std::size_t begin;         // offset into PeerContext::tokens
    std::size_t length;
};

struct PeerContext {
    std::vector<TokenId> tokens;
    std::vector<ContextBlock> blocks;
    Rung rung = Rung::NoPeer;
    std::size_t dropped_blocks = 0;
    bool success_shortfall = false;
    bool failure_shortfall = false;

    bool empty() const noexcept { return tokens.empty(); }
    std::vector<std::size_t> included_rollouts() const;
};

/// Builds the context for peers.target. Blocks that would exceed `budget`
/// tokens are dropped whole from the end.
PeerContext build_context(const ContextVariant& variant, const rollout::RolloutGroup& group,
                          const rollout::PeerSets& peers, const SelectionConfig& selection,
                          std::size_t budget, RngStream* rng = nullptr);

/// Verifier feedback for the target followed by one verified success when available.
PeerContext build_feedback_context(const rollout::RolloutGroup& group,
                                   const rollout::PeerSets& peers, std::size_t budget);

TokenId feedback_token(tasks::FailureReason reason) noexcept;

/// Teacher conditioning sequence: prompt followed by the context tokens.
std::vector<TokenId> teacher_conditioning(std::span<const TokenId> prompt, const PeerContext& context);

} // namespace mopd::peercontext
