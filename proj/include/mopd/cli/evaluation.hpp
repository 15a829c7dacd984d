// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mopd/model/policy_model.hpp"
#include "mopd/tasks/tasks.hpp"

namespace mopd::cli {

/// Both metrics are fractions in [0, 1]; CSVs report them as percentages.
struct EvalResult {
    double mean_at_k = 0.0;
    double pass_at_k = 0.0;
    std::size_t prompts = 0;
    std::size_t k = 0;
};

/// rewards[p] holds the k rewards drawn for prompt p. Throws on an empty
/// input or ragged rows.
EvalResult summarize_rewards(std::span<const std::vector<double>> rewards, double tau);

/// Stream tag for evaluation sampling; the training step never enters the key,
/// so two runs evaluated with the same seed see the same random numbers.
inline constexpr std::uint64_t kEvalStreamTag = 0x4556414CULL;

struct EvalSettingsView {
    std::size_t k = 8;
    double temperature = 1.0;
    std::size_t max_response_len = 128;
    double tau = 0.5;
};

/// Draws k samples per prompt, sample i of prompt p from the stream keyed
/// (seed, tag, prompt id, i).
EvalResult evaluate(const model::PolicyModel& model, const tasks::TaskSpec& task,
                    std::span<const tasks::ProblemInstance> prompts, const EvalSettingsView& settings,
                    std::uint64_t seed, std::uint64_t tag = kEvalStreamTag);

} // namespace mopd::cli
