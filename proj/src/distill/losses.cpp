// SPDX-License-Identifier: Apache-2.0
#include "mopd/distill/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mopd::distill {

void DistillLossConfig::validate() const
{
    if (top_k == 0) {
        throw std::invalid_argument("distill: top_k must be >= 1");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("distill: alpha must lie in [0, 1]");
    }
}

StudentForward trainable_forward(model::PolicyModel& model)
{
    return [&model](Tape& tape, std::span<const TokenId> tokens) { return model.forward(tape, tokens); };
}

StudentForward leaf_forward(const model::PolicyModel& model, std::span<const Var> leaves)
{
    std::vector<Var> copy(leaves.begin(), leaves.end());
    return [&model, copy](Tape& tape, std::span<const TokenId> tokens) {
        return model.forward(tape, tokens, copy);
    };
}

Var response_log_distributions(Tape& tape, const StudentForward& student,
                               std::span<const TokenId> prompt, std::span<const TokenId> response)
{
    if (prompt.empty() || response.empty()) {
        throw std::invalid_argument("response_log_distributions: prompt and response must be nonempty");
    }
    std::vector<TokenId> input(prompt.begin(), prompt.end());
    input.insert(input.end(), response.begin(), response.end() - 1);
    const Var logits = student(tape, input);
    return tape.log_softmax_rows(tape.slice_rows(logits, prompt.size() - 1, response.size()));
}

Tensor teacher_log_distributions(const model::PolicyModel& teacher, std::span<const TokenId> prompt,
                                 const peercontext::PeerContext& context,
                                 std::span<const TokenId> response)
{
    const auto conditioning = peercontext::teacher_conditioning(prompt, context);
    return model::target_log_distributions(teacher, conditioning, response);
}

Var mopd_rollout_loss(Tape& tape, Var student_logp, const Tensor& teacher_logp,
                      const DistillLossConfig& config)
{
    return divergence_rows(tape, student_logp, teacher_logp, config.kind, config.top_k);
}

Var mopd_rollout_loss(Tape& tape, const StudentForward& student, const model::PolicyModel& teacher,
                      std::span<const TokenId> prompt, const peercontext::PeerContext& context,
                      std::span<const TokenId> response, const DistillLossConfig& config)
{
    const Var s = response_log_distributions(tape, student, prompt, response);
    const Tensor t = teacher_log_distributions(teacher, prompt, context, response);
    return mopd_rollout_loss(tape, s, t, config);
}

std::vector<double> grpo_advantages(std::span<const double> rewards)
{
    if (rewards.empty()) {
        throw std::invalid_argument("grpo_advantages: empty reward vector");
    }
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= n;
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double sd = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (sd < 1e-8) {
        return out;
    }
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        out[i] = (rewards[i] - mean) / sd;
    }
    return out;
}

Var negative_log_likelihood(Tape& tape, Var student_logp, std::span<const TokenId> response)
{
    std::vector<std::size_t> ids(response.begin(), response.end());
    return tape.scale(tape.sum(tape.pick(student_logp, ids)), -1.0);
}

Var policy_gradient_term(Tape& tape, Var student_logp, std::span<const TokenId> response,
                         double advantage)
{
    std::vector<std::size_t> ids(response.begin(), response.end());
    return tape.scale(tape.sum(tape.pick(student_logp, ids)), -advantage);
}

} // namespace mopd::distill
