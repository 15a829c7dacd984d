// SPDX-License-Identifier: Apache-2.0
#include "mopd/distill/train_step.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace mopd::distill {

namespace {

constexpr std::uint64_t kContextStreamTag = 0x43545854; // "CTXT"

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Weighted objective of one rollout; accumulates weighted components into parts.
Var rollout_term(Tape& tape, const StudentForward& student, const model::PolicyModel* teacher,
                 const tasks::ProblemInstance& instance, std::span<const TokenId> response,
                 const peercontext::PeerContext& context, double advantage,
                 const TrainConfig& cfg, double weight, ObjectiveParts& parts)
{
    const Var s = response_log_distributions(tape, student, instance.prompt, response);
    parts.rollouts += 1;
    parts.response_tokens += response.size();

    if (cfg.method == Method::GKD) {
        const Var nll = negative_log_likelihood(tape, s, response);
        parts.nll += weight * tape.scalar(nll);
        return tape.scale(nll, weight);
    }
    if (cfg.method == Method::GRPO) {
        const Var pg = policy_gradient_term(tape, s, response, advantage);
        parts.policy += weight * tape.scalar(pg);
        return tape.scale(pg, weight);
    }
    const double alpha = cfg.loss.alpha;
    std::optional<Var> total;
    if (alpha > 0.0) {
        if (!teacher) {
            throw std::logic_error("batch objective: distillation term needs a teacher");
        }
        const Tensor t = teacher_log_distributions(*teacher, instance.prompt, context, response);
        const Var d = mopd_rollout_loss(tape, s, t, cfg.loss);
        parts.distill += weight * tape.scalar(d);
        total = tape.scale(d, weight * alpha);
    }
    if (alpha < 1.0) {
        const Var pg = policy_gradient_term(tape, s, response, advantage);
        parts.policy += weight * tape.scalar(pg);
        const Var scaled = tape.scale(pg, weight * (1.0 - alpha));
        total = total ? tape.add(*total, scaled) : scaled;
    }
    return *total;
}

template <class Visit>
void for_each_rollout(const PreparedBatch& batch, Visit&& visit)
{
    if (batch.groups.size() != batch.instances.size() ||
        batch.contexts.size() != batch.groups.size() ||
        batch.advantages.size() != batch.groups.size()) {
        throw std::invalid_argument("batch objective: batch is not prepared");
    }
    const std::size_t B = batch.groups.size();
    for (std::size_t b = 0; b < B; ++b) {
        const rollout::RolloutGroup& g = batch.groups[b];
        const double weight = 1.0 / (static_cast<double>(B) * static_cast<double>(g.size()));
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g.rollouts[i].ids.empty()) {
                continue;
            }
            visit(batch.instances[b], g.rollouts[i].ids, batch.contexts[b][i],
                  batch.advantages[b][i], weight);
        }
    }
}

} // namespace

std::string_view method_name(Method m) noexcept
{
    switch (m) {
    case Method::MOPD:
        return "MOPD";
    case Method::OPDSingle:
        return "OPD-single";
    case Method::SDPOLike:
        return "SDPO-like";
    case Method::GRPO:
        return "GRPO";
    case Method::GKD:
        return "GKD";
    case Method::OPDTS:
        return "OPD-TS";
    case Method::MOPDTS:
        return "MOPD-TS";
    }
    return "?";
}

Method parse_method(std::string_view name)
{
    for (Method m : {Method::MOPD, Method::OPDSingle, Method::SDPOLike, Method::GRPO, Method::GKD,
                     Method::OPDTS, Method::MOPDTS}) {
        if (name == method_name(m)) {
            return m;
        }
    }
    throw std::invalid_argument("unknown method: " + std::string(name));
}

bool uses_external_teacher(Method m) noexcept
{
    return m == Method::OPDTS || m == Method::MOPDTS;
}

void TrainConfig::validate() const
{
    loss.validate();
    if (sampling.group_size == 0) {
        throw std::invalid_argument("train: group size must be >= 1");
    }
    if (sampling.max_response_len == 0) {
        throw std::invalid_argument("train: max_response_len must be >= 1");
    }
    if (!(sampling.temperature >= 0.0) || !std::isfinite(sampling.temperature)) {
        throw std::invalid_argument("train: temperature must be finite and >= 0");
    }
    if (!(tau > 0.0 && tau <= 1.0)) {
        throw std::invalid_argument("train: tau must lie in (0, 1]");
    }
    if (teacher_refresh == 0) {
        throw std::invalid_argument("train: teacher_refresh must be >= 1");
    }
    if (!(adam.learning_rate > 0.0)) {
        throw std::invalid_argument("train: learning rate must be positive");
    }
}

void prepare_batch(PreparedBatch& batch, const TrainConfig& config, std::uint64_t seed,
                   std::uint64_t step)
{
    const std::size_t budget = config.effective_budget();
    batch.contexts.assign(batch.groups.size(), {});
    batch.advantages.assign(batch.groups.size(), {});
    for (std::size_t b = 0; b < batch.groups.size(); ++b) {
        const rollout::RolloutGroup& g = batch.groups[b];
        if (!g.scored) {
            throw std::logic_error("prepare_batch: group not scored");
        }
        batch.advantages[b] = config.method == Method::GKD ? std::vector<double>(g.size(), 0.0)
                                                           : grpo_advantages(g.rewards);
        auto& contexts = batch.contexts[b];
        contexts.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            switch (config.method) {
            case Method::MOPD:
            case Method::MOPDTS: {
                const rollout::PeerSets ps = rollout::peer_sets(g, i);
                RngStream rng = RngStream::keyed({seed, step, g.prompt_id, i, kContextStreamTag});
                contexts[i] =
                    peercontext::build_context(config.variant, g, ps, config.selection, budget, &rng);
                break;
            }
            case Method::SDPOLike:
                contexts[i] = peercontext::build_feedback_context(g, rollout::peer_sets(g, i), budget);
                break;
            case Method::OPDSingle:
            case Method::OPDTS:
            case Method::GRPO:
            case Method::GKD:
                break;
            }
        }
    }
}

Var batch_objective(Tape& tape, const PreparedBatch& batch, const StudentForward& student,
                    const model::PolicyModel* teacher, const TrainConfig& config,
                    ObjectiveParts* parts)
{
    ObjectiveParts local;
    std::optional<Var> total;
    for_each_rollout(batch, [&](const tasks::ProblemInstance& inst, std::span<const TokenId> resp,
                                const peercontext::PeerContext& ctx, double adv, double w) {
        const Var t = rollout_term(tape, student, teacher, inst, resp, ctx, adv, config, w, local);
        total = total ? tape.add(*total, t) : t;
    });
    if (!total) {
        total = tape.constant(Tensor(numerics::Shape{1}, 0.0));
    }
    local.total = tape.scalar(*total);
    if (parts) {
        *parts = local;
    }
    return *total;
}

ObjectiveParts accumulate_batch_gradients(const PreparedBatch& batch, model::PolicyModel& student,
                                          const model::PolicyModel* teacher,
                                          const TrainConfig& config)
{
    ObjectiveParts parts;
    const StudentForward forward = trainable_forward(student);
    for_each_rollout(batch, [&](const tasks::ProblemInstance& inst, std::span<const TokenId> resp,
                                const peercontext::PeerContext& ctx, double adv, double w) {
        Tape tape(true);
        const Var t = rollout_term(tape, forward, teacher, inst, resp, ctx, adv, config, w, parts);
        parts.total += tape.scalar(t);
        tape.backward(t);
    });
    return parts;
}

Trainer::Trainer(model::PolicyModel& student, TrainConfig config, tasks::TaskSpec task,
                 std::uint64_t seed, model::FrozenModel external_teacher)
    : student_(student), config_(std::move(config)), task_(task), seed_(seed),
      external_(std::move(external_teacher))
{
    config_.validate();
    task_.validate();
    if (uses_external_teacher(config_.method) && !external_) {
        throw std::invalid_argument(std::string(method_name(config_.method)) +
                                    " needs an external teacher checkpoint");
    }
}

StepMetrics Trainer::step(std::span<const tasks::ProblemInstance> prompts)
{
    StepMetrics m;
    m.step = step_;
    const auto start = Clock::now();
    auto t0 = start;

    if (uses_external_teacher(config_.method) || (config_.method == Method::GKD && external_)) {
        teacher_ = external_;
    } else if (!teacher_ || step_ % config_.teacher_refresh == 0) {
        teacher_ = model::clone_frozen(student_);
    }
    const model::PolicyModel& sampler =
        config_.method == Method::GKD ? *teacher_ : static_cast<const model::PolicyModel&>(student_);

    last_ = PreparedBatch{};
    last_.instances.assign(prompts.begin(), prompts.end());
    for (const tasks::ProblemInstance& inst : prompts) {
        last_.groups.push_back(rollout::sample_group(sampler, inst, config_.sampling, seed_, step_));
    }
    m.generation_ms = ms_since(t0);

    t0 = Clock::now();
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (std::size_t b = 0; b < last_.groups.size(); ++b) {
        rollout::RolloutGroup& g = last_.groups[b];
        rollout::score_and_partition(g, task_, last_.instances[b], config_.tau);
        for (double r : g.rewards) {
            reward_sum += r;
            ++reward_count;
        }
        m.prompts_with_success += g.successes.empty() ? 0 : 1;
    }
    m.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
    m.ever_success = tracker_.update(step_, last_.groups);
    m.reward_ms = ms_since(t0);

    t0 = Clock::now();
    prepare_batch(last_, config_, seed_, step_);
    for (const auto& row : last_.contexts) {
        for (const peercontext::PeerContext& c : row) {
            std::size_t slot = static_cast<std::size_t>(RungCount::NoPeer);
            switch (c.rung) {
            case peercontext::Rung::Contrastive:
                slot = static_cast<std::size_t>(RungCount::Contrastive);
                break;
            case peercontext::Rung::PositiveOnly:
                slot = static_cast<std::size_t>(RungCount::PositiveOnly);
                break;
            case peercontext::Rung::FailureOnly:
                slot = static_cast<std::size_t>(RungCount::FailureOnly);
                break;
            case peercontext::Rung::Feedback:
                slot = static_cast<std::size_t>(RungCount::Feedback);
                break;
            case peercontext::Rung::NoPeer:
            case peercontext::Rung::Analysis:
                break;
            }
            m.rungs[slot] += 1;
        }
    }
    m.advantage_ms = ms_since(t0);

    t0 = Clock::now();
    const auto params = student_.parameters();
    for (numerics::Tensor* p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    m.objective = accumulate_batch_gradients(last_, student_, teacher_.get(), config_);
    double sq = 0.0;
    for (const numerics::Tensor* p : params) {
        for (double g : p->grad()) {
            sq += g * g;
        }
    }
    m.grad_norm = std::sqrt(sq);
    m.learning_rate = numerics::scheduled_learning_rate(config_.adam, adam_.step + 1);
    numerics::adam_step(params, adam_, config_.adam);
    m.update_ms = ms_since(t0);
    m.total_ms = ms_since(start);
    ++step_;
    return m;
}

} // namespace mopd::distill
