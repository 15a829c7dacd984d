// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mopd/model/policy_model.hpp"
#include "mopd/peercontext/peer_context.hpp"
#include "mopd/tasks/tasks.hpp"

namespace mopd::analysis {

// Per-prompt agreement between teacher scores s and rewards r. All functions
// need equal-length inputs; the rank metrics need n >= 2 (std::invalid_argument
// otherwise) and return nullopt when the metric is undefined.

/// Pearson correlation of average-tie ranks (population moments).
std::optional<double> spearman(std::span<const double> scores, std::span<const double> rewards);
/// (C - D) / (C + D) over pairs tied in neither variable.
std::optional<double> kendall(std::span<const double> scores, std::span<const double> rewards);
/// Among pairs with r_i != r_j, the fraction with (s_i - s_j)(r_i - r_j) > 0.
std::optional<double> pairwise_accuracy(std::span<const double> scores,
                                        std::span<const double> rewards);
/// P(s_pos > s_neg) + P(s_pos == s_neg) / 2 for labels thresholded at 0.5.
std::optional<double> success_auc(std::span<const double> scores, std::span<const double> labels);
/// Pearson correlation of scores with 0/1 labels (population moments).
std::optional<double> point_biserial(std::span<const double> scores,
                                     std::span<const double> labels);
/// mean (sigmoid(s_i) - r_i)^2; n >= 1.
double brier_sigmoid(std::span<const double> scores, std::span<const double> rewards);

/// Plain Pearson correlation with population moments; nullopt if either side is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

enum class Metric : std::uint8_t { Spearman, Kendall, PairwiseAccuracy, SuccessAuc, PointBiserial, Brier };
inline constexpr std::array<Metric, 6> kMetrics = {Metric::Spearman,   Metric::Kendall,
                                                   Metric::PairwiseAccuracy, Metric::SuccessAuc,
                                                   Metric::PointBiserial,    Metric::Brier};
std::string_view metric_name(Metric m) noexcept;

struct PromptMetrics {
    std::array<std::optional<double>, 6> values;
    std::optional<double> operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
};

/// Labels for AUC and point-biserial are r_i >= tau.
PromptMetrics prompt_metrics(std::span<const double> scores, std::span<const double> rewards,
                             double tau = 0.5);

struct AggregateValue {
    std::optional<double> mean; // absent when defined on no prompt
    std::size_t defined = 0;
};

/// Mean over prompts where each metric is defined; with impute_zero,
/// undefined values count as 0 instead of being skipped.
std::array<AggregateValue, 6> aggregate(std::span<const PromptMetrics> prompts,
                                        bool impute_zero = false);

/// Mean token log-probability of `rollout` under the teacher given prompt and context.
double teacher_score(const model::PolicyModel& teacher, std::span<const TokenId> prompt,
                     const peercontext::PeerContext& context, std::span<const TokenId> rollout);

struct SignalAnalysisConfig {
    std::size_t group_size = 8;
    double temperature = 1.0;
    std::size_t max_response_len = 128;
    std::size_t context_budget = 256;
    double tau = 0.5;
    bool impute_zero = false;
    std::vector<peercontext::AnalysisCondition> conditions{peercontext::kAnalysisConditions.begin(),
                                                           peercontext::kAnalysisConditions.end()};
};

struct ScoredRollout {
    std::uint64_t prompt_id;
    std::size_t rollout_index;
    peercontext::AnalysisCondition condition;
    double score;
    double reward;
};

struct ConditionReport {
    peercontext::AnalysisCondition condition;
    std::array<AggregateValue, 6> metrics;
    std::size_t prompts = 0;
};

struct SignalAnalysis {
    std::vector<ConditionReport> conditions;
    std::vector<rollout::RolloutGroup> groups; // the fixed rollout sets
    std::vector<ScoredRollout> records;
};

/// Samples one group per prompt from `model`, then scores that same set under
/// every condition with `model` as the self-teacher.
SignalAnalysis analyze_signal(const model::PolicyModel& model, const tasks::TaskSpec& task,
                              std::span<const tasks::ProblemInstance> prompts,
                              const SignalAnalysisConfig& config, std::uint64_t seed);

} // namespace mopd::analysis
