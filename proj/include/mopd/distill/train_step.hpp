// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mopd/distill/losses.hpp"
#include "mopd/numerics/optimizer.hpp"
#include "mopd/peercontext/peer_context.hpp"
#include "mopd/rollout/rollout.hpp"
#include "mopd/tasks/tasks.hpp"

namespace mopd::distill {

enum class Method : std::uint8_t { MOPD, OPDSingle, SDPOLike, GRPO, GKD, OPDTS, MOPDTS };

std::string_view method_name(Method m) noexcept;
/// Accepts "MOPD", "OPD-single", "SDPO-like", "GRPO", "GKD", "OPD-TS", "MOPD-TS".
Method parse_method(std::string_view name);
/// OPD-TS and MOPD-TS distill from a separately trained teacher.
bool uses_external_teacher(Method m) noexcept;

struct TrainConfig {
    Method method = Method::MOPD;
    DistillLossConfig loss;
    peercontext::ContextVariant variant = peercontext::ContextVariant::contrastive();
    peercontext::SelectionConfig selection;
    std::size_t context_budget = 0; // 0 means twice the response cap
    rollout::SamplingConfig sampling;
    double tau = 0.5;
    numerics::AdamConfig adam;
    std::size_t teacher_refresh = 1; // self-teacher snapshot period K

    std::size_t effective_budget() const noexcept
    {
        return context_budget ? context_budget : 2 * sampling.max_response_len;
    }
    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// A scored batch with the contexts chosen for each rollout.
struct PreparedBatch {
    std::vector<tasks::ProblemInstance> instances;
    std::vector<rollout::RolloutGroup> groups;
    std::vector<std::vector<peercontext::PeerContext>> contexts; // [prompt][rollout]
    std::vector<std::vector<double>> advantages;                 // [prompt][rollout]
};

/// Builds per-rollout contexts and advantages for `method` on scored groups.
/// Uniform peer selection draws from streams keyed by (seed, step, prompt id, rollout).
void prepare_batch(PreparedBatch& batch, const TrainConfig& config, std::uint64_t seed,
                   std::uint64_t step);

struct ObjectiveParts {
    double total = 0.0;
    double distill = 0.0; // mean over prompts of the mean over rollouts of the summed divergence
    double policy = 0.0;  // same aggregation for the policy-gradient term
    double nll = 0.0;     // same aggregation for the likelihood term (GKD)
    std::size_t rollouts = 0;
    std::size_t response_tokens = 0;
};

/// Whole-batch objective on one tape:
/// (1/B) sum_b (1/N_b) sum_i [alpha * D_i + (1 - alpha) * PG_i] for the
/// distillation methods, PG only for GRPO, NLL only for GKD.
/// `teacher` may be null when no distillation term is needed.
Var batch_objective(Tape& tape, const PreparedBatch& batch, const StudentForward& student,
                    const model::PolicyModel* teacher, const TrainConfig& config,
                    ObjectiveParts* parts = nullptr);

/// Same value, but each rollout term gets its own tape and is back-propagated
/// into the parameter gradient slots immediately (index-ascending order).
ObjectiveParts accumulate_batch_gradients(const PreparedBatch& batch, model::PolicyModel& student,
                                          const model::PolicyModel* teacher,
                                          const TrainConfig& config);

enum class RungCount : std::size_t { Contrastive, PositiveOnly, FailureOnly, NoPeer, Feedback, Size };

struct StepMetrics {
    std::uint64_t step = 0;
    ObjectiveParts objective;
    double mean_reward = 0.0;
    std::size_t prompts_with_success = 0;
    std::size_t ever_success = 0;
    std::array<std::size_t, static_cast<std::size_t>(RungCount::Size)> rungs{};
    double grad_norm = 0.0;
    double learning_rate = 0.0;
    // Wall-clock milliseconds; not deterministic.
    double generation_ms = 0.0;
    double reward_ms = 0.0;
    double advantage_ms = 0.0; // advantages and teacher contexts
    double update_ms = 0.0;    // losses, backward pass and optimizer
    double total_ms = 0.0;
};

/// Runs training steps for one method. The self-teacher snapshot is refreshed
/// every `teacher_refresh` steps; the external teacher never changes.
class Trainer {
public:
    Trainer(model::PolicyModel& student, TrainConfig config, tasks::TaskSpec task,
            std::uint64_t seed, model::FrozenModel external_teacher = nullptr);

    /// One step on the given prompts. The last prepared batch stays available
    /// through last_batch() for logging.
    StepMetrics step(std::span<const tasks::ProblemInstance> prompts);

    std::uint64_t steps_done() const noexcept { return step_; }
    const rollout::EverSuccessTracker& tracker() const noexcept { return tracker_; }
    const PreparedBatch& last_batch() const noexcept { return last_; }
    const numerics::AdamState& optimizer_state() const noexcept { return adam_; }
    model::FrozenModel teacher() const noexcept { return teacher_; }

private:
    model::PolicyModel& student_;
    TrainConfig config_;
    tasks::TaskSpec task_;
    std::uint64_t seed_;
    model::FrozenModel external_;
    model::FrozenModel teacher_;
    numerics::AdamState adam_;
    rollout::EverSuccessTracker tracker_;
    PreparedBatch last_;
    std::uint64_t step_ = 0;
};

} // namespace mopd::distill
