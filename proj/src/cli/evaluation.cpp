// SPDX-License-Identifier: Apache-2.0
#include "mopd/cli/evaluation.hpp"

#include <stdexcept>

#include "mopd/rollout/rollout.hpp"

namespace mopd::cli {

EvalResult summarize_rewards(std::span<const std::vector<double>> rewards, double tau)
{
    if (rewards.empty() || rewards.front().empty()) {
        throw std::invalid_argument("summarize_rewards: need at least one prompt and one sample");
    }
    EvalResult r;
    r.prompts = rewards.size();
    r.k = rewards.front().size();
    double mean_sum = 0.0;
    std::size_t passed = 0;
    for (const auto& row : rewards) {
        if (row.size() != r.k) {
            throw std::invalid_argument("summarize_rewards: ragged reward rows");
        }
        double s = 0.0;
        bool any = false;
        for (double v : row) {
            s += v;
            any = any || v >= tau;
        }
        mean_sum += s / static_cast<double>(r.k);
        passed += any ? 1 : 0;
    }
    r.mean_at_k = mean_sum / static_cast<double>(r.prompts);
    r.pass_at_k = static_cast<double>(passed) / static_cast<double>(r.prompts);
    return r;
}

EvalResult evaluate(const model::PolicyModel& model, const tasks::TaskSpec& task,
                    std::span<const tasks::ProblemInstance> prompts, const EvalSettingsView& settings,
                    std::uint64_t seed, std::uint64_t tag)
{
    if (settings.k == 0) {
        throw std::invalid_argument("evaluate: k must be >= 1");
    }
    std::vector<std::vector<double>> rewards;
    rewards.reserve(prompts.size());
    for (const auto& inst : prompts) {
        auto& row = rewards.emplace_back();
        row.reserve(settings.k);
        for (std::size_t i = 0; i < settings.k; ++i) {
            RngStream rng = rollout::rollout_stream(seed, tag, inst.id, i);
            const auto response = model::sample_rollout(model, inst.prompt, settings.max_response_len,
                                                        settings.temperature, rng);
            row.push_back(tasks::verify(task, inst, response).reward);
        }
    }
    return summarize_rewards(rewards, settings.tau);
}

} // namespace mopd::cli
