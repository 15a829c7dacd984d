// SPDX-License-Identifier: Apache-2.0
#include "mopd/rollout/rollout.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mopd::rollout {

bool RolloutGroup::is_success(std::size_t i) const
{
    if (!scored) {
        throw std::logic_error("RolloutGroup: not scored");
    }
    return std::binary_search(successes.begin(), successes.end(), i);
}

RngStream rollout_stream(std::uint64_t seed, std::uint64_t step, std::uint64_t prompt_id,
                         std::size_t rollout_index) noexcept
{
    return RngStream::keyed({seed, step, prompt_id, static_cast<std::uint64_t>(rollout_index)});
}

RolloutGroup sample_group(const model::PolicyModel& model, const tasks::ProblemInstance& instance,
                          const SamplingConfig& config, std::uint64_t seed, std::uint64_t step)
{
    if (config.group_size == 0) {
        throw std::invalid_argument("sample_group: group size must be >= 1");
    }
    RolloutGroup group;
    group.prompt_id = instance.id;
    group.rollouts.reserve(config.group_size);
    for (std::size_t i = 0; i < config.group_size; ++i) {
        RngStream rng = rollout_stream(seed, step, instance.id, i);
        group.rollouts.push_back(
            {model::sample_rollout(model, instance.prompt, config.max_response_len,
                                   config.temperature, rng),
             SequenceRole::Response});
    }
    return group;
}

void partition(RolloutGroup& group, std::span<const double> rewards, double tau)
{
    if (rewards.size() != group.size()) {
        throw std::invalid_argument("partition: " + std::to_string(rewards.size()) +
                                    " rewards for a group of " + std::to_string(group.size()));
    }
    if (!(tau > 0.0 && tau <= 1.0)) {
        throw std::invalid_argument("partition: tau must lie in (0, 1]");
    }
    group.rewards.assign(rewards.begin(), rewards.end());
    group.successes.clear();
    group.failures.clear();
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        (rewards[i] >= tau ? group.successes : group.failures).push_back(i);
    }
    if (group.reasons.size() != group.size()) {
        group.reasons.assign(group.size(), tasks::FailureReason::None);
    }
    group.scored = true;
}

void score_and_partition(RolloutGroup& group, const tasks::TaskSpec& spec,
                         const tasks::ProblemInstance& instance, double tau)
{
    std::vector<double> rewards;
    group.reasons.clear();
    for (const TokenSequence& r : group.rollouts) {
        const tasks::Verdict v = tasks::verify(spec, instance, r.ids);
        rewards.push_back(v.reward);
        group.reasons.push_back(v.reason);
    }
    partition(group, rewards, tau);
}

PeerSets peer_sets(const RolloutGroup& group, std::size_t target)
{
    if (!group.scored) {
        throw std::logic_error("peer_sets: group not scored");
    }
    if (target >= group.size()) {
        throw std::out_of_range("peer_sets: target " + std::to_string(target) +
                                " out of range for group of " + std::to_string(group.size()));
    }
    PeerSets out;
    out.target = target;
    for (std::size_t i : group.successes) {
        if (i != target) {
            out.success_peers.push_back(i);
        }
    }
    for (std::size_t i : group.failures) {
        if (i != target) {
            out.failure_peers.push_back(i);
        }
    }
    return out;
}

std::size_t EverSuccessTracker::update(std::uint64_t step, std::span<const RolloutGroup> groups)
{
    for (const RolloutGroup& g : groups) {
        bool& flag = seen_[g.prompt_id];
        if (!flag && !g.successes.empty()) {
            flag = true;
            ++count_;
        }
    }
    history_.emplace_back(step, count_);
    return count_;
}

bool EverSuccessTracker::ever(std::uint64_t prompt_id) const
{
    const auto it = seen_.find(prompt_id);
    return it != seen_.end() && it->second;
}

} // namespace mopd::rollout
