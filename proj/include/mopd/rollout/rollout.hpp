// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "mopd/model/policy_model.hpp"
#include "mopd/tasks/tasks.hpp"
#include "mopd/tokens.hpp"

namespace mopd::rollout {

/// N sampled responses for one prompt. Indices are 0-based.
struct RolloutGroup {
    std::uint64_t prompt_id = 0;
    std::vector<TokenSequence> rollouts;
    std::vector<double> rewards;                    // set by scoring
    std::vector<tasks::FailureReason> reasons;      // set by scoring
    std::vector<std::size_t> successes, failures;   // ascending
    bool scored = false;

    std::size_t size() const noexcept { return rollouts.size(); }
    bool is_success(std::size_t i) const;
};

struct SamplingConfig {
    std::size_t group_size = 8;
    double temperature = 1.0;
    std::size_t max_response_len = 128;

    friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

/// Rollout i uses the sub-stream keyed (seed, step, prompt id, i), so a
/// group does not depend on which other groups were sampled or in what order.
RolloutGroup sample_group(const model::PolicyModel& model, const tasks::ProblemInstance& instance,
                          const SamplingConfig& config, std::uint64_t seed, std::uint64_t step);

RngStream rollout_stream(std::uint64_t seed, std::uint64_t step, std::uint64_t prompt_id,
                         std::size_t rollout_index) noexcept;

/// Thresholds externally supplied rewards: i succeeds iff rewards[i] >= tau.
/// Throws std::invalid_argument on a size mismatch or tau outside (0, 1].
void partition(RolloutGroup& group, std::span<const double> rewards, double tau);

/// Verifies every rollout, then partitions.
void score_and_partition(RolloutGroup& group, const tasks::TaskSpec& spec,
                         const tasks::ProblemInstance& instance, double tau);

struct PeerSets {
    std::size_t target = 0;
    std::vector<std::size_t> success_peers; // ascending, target excluded
    std::vector<std::size_t> failure_peers; // ascending, target excluded
};

/// Throws std::out_of_range when target >= N, std::logic_error when unscored.
PeerSets peer_sets(const RolloutGroup& group, std::size_t target);

/// Latching per-prompt record of whether any rollout ever succeeded.
class EverSuccessTracker {
public:
    /// Marks prompts with a success in this step and appends the running count.
    std::size_t update(std::uint64_t step, std::span<const RolloutGroup> groups);

    std::size_t count() const noexcept { return count_; }
    bool ever(std::uint64_t prompt_id) const;
    std::size_t prompts_seen() const noexcept { return seen_.size(); }
    const std::vector<std::pair<std::uint64_t, std::size_t>>& history() const noexcept
    {
        return history_;
    }

private:
    std::map<std::uint64_t, bool> seen_;
    std::size_t count_ = 0;
    std::vector<std::pair<std::uint64_t, std::size_t>> history_;
};

} // namespace mopd::rollout
