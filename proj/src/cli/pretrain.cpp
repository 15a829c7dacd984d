// SPDX-License-Identifier: Apache-2.0
#include "mopd/cli/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "mopd/cli/evaluation.hpp"
#include "mopd/distill/losses.hpp"
#include "mopd/numerics/optimizer.hpp"
#include "mopd/peercontext/peer_context.hpp"

namespace mopd::cli {

namespace {

constexpr std::uint64_t kPretrainTag = 0x50524554ULL;     // example draws
constexpr std::uint64_t kPretrainEvalTag = 0x50455641ULL; // band estimates

using peercontext::TemplateKind;

void append_block(std::vector<TokenId>& out, TemplateKind kind, std::span<const TokenId> rollout)
{
    const auto block = peercontext::render_template(kind, rollout);
    out.insert(out.end(), block.begin(), block.end());
}

double band_distance(double p, double low, double high) noexcept
{
    if (p < low) {
        return low - p;
    }
    return p > high ? p - high : 0.0;
}

} // namespace

std::vector<TokenId> corrupt_response(const tasks::TaskSpec& task, const tasks::ProblemInstance& instance,
                                      RngStream& rng)
{
    const auto& canonical = instance.canonical_response;
    std::vector<std::size_t> digits, ops;
    for (std::size_t i = 0; i < canonical.size(); ++i) {
        if (tok::is_digit(canonical[i])) {
            digits.push_back(i);
        } else if (canonical[i] == tok::kPlus || canonical[i] == tok::kTimes) {
            ops.push_back(i);
        }
    }
    for (int attempt = 0; attempt < 8; ++attempt) {
        std::vector<TokenId> out;
        const bool near_miss = rng.uniform() < 0.25;
        if (near_miss && !ops.empty() && rng.below(2) == 0) {
            out = canonical;
            const std::size_t at = ops[rng.below(ops.size())];
            out[at] = out[at] == tok::kPlus ? tok::kTimes : tok::kPlus;
        } else if (near_miss && !digits.empty()) {
            out = canonical;
            const std::size_t at = digits[rng.below(digits.size())];
            const int old = tok::digit_value(out[at]);
            out[at] = tok::digit(static_cast<int>((old + 1 + rng.below(9)) % 10));
        } else {
            out = tasks::generate_instance(task, rng).canonical_response;
        }
        if (tasks::verify(task, instance, out).reward < 0.5) {
            return out;
        }
    }
    auto out = canonical;
    out.erase(std::remove(out.begin(), out.end(), tok::kAnsClose), out.end());
    return out;
}

std::vector<TokenId> synthetic_context(const tasks::TaskSpec& task, const tasks::ProblemInstance& instance,
                                       RngStream& rng)
{
    const auto& good = instance.canonical_response;
    std::vector<TokenId> out;
    switch (rng.below(6)) {
    case 0:
        append_block(out, TemplateKind::Primary, good);
        break;
    case 1:
        append_block(out, TemplateKind::Primary, good);
        append_block(out, TemplateKind::Success, good);
        break;
    case 2:
        append_block(out, TemplateKind::Primary, good);
        append_block(out, TemplateKind::Failure, corrupt_response(task, instance, rng));
        break;
    case 3:
        append_block(out, TemplateKind::Primary, good);
        append_block(out, TemplateKind::Success, good);
        append_block(out, TemplateKind::Failure, corrupt_response(task, instance, rng));
        break;
    case 4: {
        const std::size_t n = 1 + rng.below(2);
        for (std::size_t i = 0; i < n; ++i) {
            append_block(out, TemplateKind::Failure, corrupt_response(task, instance, rng));
        }
        break;
    }
    default: {
        // A whole group in index order, as the all-rollouts analysis lays it out.
        const std::size_t n = 2 + rng.below(6);
        const std::size_t first_success = rng.below(n);
        bool primary_done = false;
        for (std::size_t i = 0; i < n; ++i) {
            const bool success = i == first_success || (i > first_success && rng.below(2) == 0);
            if (!success) {
                append_block(out, TemplateKind::Failure, corrupt_response(task, instance, rng));
            } else {
                append_block(out, primary_done ? TemplateKind::Success : TemplateKind::Primary, good);
                primary_done = true;
            }
        }
        break;
    }
    }
    return out;
}

PretrainResult pretrain(const RunConfig& config, const std::function<void(const PretrainRecord&)>& on_record)
{
    config.validate();
    const auto& settings = config.pretrain;
    auto model = std::make_unique<model::PolicyModel>(config.model);
    const auto validation =
        tasks::make_pool(config.task, tasks::InstancePool::Validation, config.seed, settings.eval_prompts);
    const EvalSettingsView eval_view{config.eval.k, config.eval.temperature, config.response_cap(),
                                     config.train.tau};

    numerics::AdamConfig adam = config.train.adam;
    adam.learning_rate = settings.learning_rate;
    adam.warmup_steps = settings.warmup_steps;
    numerics::AdamState state;

    PretrainResult result;
    double best_distance = INFINITY;
    auto consider = [&](std::uint64_t step, PretrainRecord& record) {
        const double p = evaluate(*model, config.task, validation, eval_view, config.seed, kPretrainEvalTag).mean_at_k;
        record.pass_at_1 = p;
        const double d = band_distance(p, settings.band_low, settings.band_high);
        if (d < best_distance) {
            best_distance = d;
            result.model = std::make_unique<model::PolicyModel>(*model);
            result.selected_step = step;
            result.selected_pass_at_1 = p;
            result.in_band = d == 0.0;
        }
        return d == 0.0;
    };

    const std::size_t max_len = config.model.max_seq_len;
    const auto params = model->parameters();
    const auto forward = distill::trainable_forward(*model);
    bool stopped = false;
    for (std::uint64_t step = 1; step <= settings.max_steps; ++step) {
        RngStream rng = RngStream::keyed({config.seed, kPretrainTag, step});
        std::vector<std::pair<std::vector<TokenId>, tasks::ProblemInstance>> batch;
        std::size_t tokens = 0;
        for (std::size_t b = 0; b < settings.batch_size; ++b) {
            auto inst = tasks::generate_pool_instance(config.task, tasks::InstancePool::Pretrain, rng);
            std::vector<TokenId> conditioning = inst.prompt;
            if (rng.uniform() < settings.context_fraction) {
                const auto ctx = synthetic_context(config.task, inst, rng);
                if (ctx.size() <= config.context_cap() &&
                    inst.prompt.size() + ctx.size() + inst.canonical_response.size() <= max_len) {
                    conditioning.insert(conditioning.end(), ctx.begin(), ctx.end());
                }
            }
            tokens += inst.canonical_response.size();
            batch.emplace_back(std::move(conditioning), std::move(inst));
        }

        numerics::zero_grads(params);
        double loss = 0.0;
        for (const auto& [conditioning, inst] : batch) {
            numerics::Tape tape;
            const auto& response = inst.canonical_response;
            const numerics::Var logp = distill::response_log_distributions(tape, forward, conditioning, response);
            const numerics::Var nll = tape.scale(distill::negative_log_likelihood(tape, logp, response),
                                       1.0 / static_cast<double>(tokens));
            loss += tape.scalar(nll);
            tape.backward(nll);
        }
        numerics::adam_step(params, state, adam);

        PretrainRecord record{step, loss, std::nullopt};
        if (step % settings.eval_every == 0 || step == settings.max_steps) {
            stopped = consider(step, record);
        }
        result.history.push_back(record);
        if (on_record) {
            on_record(record);
        }
        if (stopped) {
            break;
        }
    }
    if (settings.max_steps == 0) {
        PretrainRecord record{0, 0.0, std::nullopt};
        consider(0, record);
        result.history.push_back(record);
        if (on_record) {
            on_record(record);
        }
    }
    return result;
}

} // namespace mopd::cli
