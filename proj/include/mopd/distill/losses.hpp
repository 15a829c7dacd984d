// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mopd/distill/divergence.hpp"
#include "mopd/model/policy_model.hpp"
#include "mopd/peercontext/peer_context.hpp"

namespace mopd::distill {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct DistillLossConfig {
    DivergenceKind kind = DivergenceKind::JensenShannon;
    std::size_t top_k = 100; // clamped to the vocabulary
    double alpha = 0.5;      // weight of the distillation term

    /// Throws std::invalid_argument when top_k == 0 or alpha outside [0, 1].
    void validate() const;
    friend bool operator==(const DistillLossConfig&, const DistillLossConfig&) = default;
};

/// Logits [T, V] for a token sequence; lets one loss graph run on model
/// parameters, caller-owned leaves or constants.
using StudentForward = std::function<Var(Tape&, std::span<const TokenId>)>;

StudentForward trainable_forward(model::PolicyModel& model);
StudentForward leaf_forward(const model::PolicyModel& model, std::span<const Var> leaves);

/// Student log-distributions [T, V] at each response position, conditioned on
/// prompt and response prefix only.
Var response_log_distributions(Tape& tape, const StudentForward& student,
                               std::span<const TokenId> prompt, std::span<const TokenId> response);

/// Teacher log-distributions [T, V] conditioned on prompt, context and prefix.
Tensor teacher_log_distributions(const model::PolicyModel& teacher, std::span<const TokenId> prompt,
                                 const peercontext::PeerContext& context,
                                 std::span<const TokenId> response);

/// Sum over response positions of the token divergence (no length normalization).
Var mopd_rollout_loss(Tape& tape, Var student_logp, const Tensor& teacher_logp,
                      const DistillLossConfig& config);

/// Convenience form that runs both models.
Var mopd_rollout_loss(Tape& tape, const StudentForward& student, const model::PolicyModel& teacher,
                      std::span<const TokenId> prompt, const peercontext::PeerContext& context,
                      std::span<const TokenId> response, const DistillLossConfig& config);

/// (r - mean) / population std; all zeros when std < 1e-8.
std::vector<double> grpo_advantages(std::span<const double> rewards);

/// -advantage * sum_t log pi(y_t).
Var policy_gradient_term(Tape& tape, Var student_logp, std::span<const TokenId> response,
                         double advantage);

/// -sum_t log pi(y_t).
Var negative_log_likelihood(Tape& tape, Var student_logp, std::span<const TokenId> response);

} // namespace mopd::distill
