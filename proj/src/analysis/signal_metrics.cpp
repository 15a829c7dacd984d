// SPDX-License-Identifier: Apache-2.0
#include "mopd/analysis/signal_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mopd::analysis {

namespace {

constexpr std::uint64_t kAnalysisStep = 0x414E414C; // "ANAL"

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument("metric: scores and rewards differ in length");
    }
    if (a.size() < min_n) {
        throw std::invalid_argument("metric: too few observations");
    }
}

std::vector<double> average_ranks(std::span<const double> x)
{
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

// Pairs tied within runs of equal keys in sorted order.
std::uint64_t tied_pairs(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) {
            ++j;
        }
        const std::uint64_t m = j - i;
        t += m * (m - 1) / 2;
        i = j;
    }
    return t;
}

// Counts strict inversions (i < j, y_i > y_j) by merge sort.
std::uint64_t inversions(std::vector<double>& y, std::vector<double>& buf, std::size_t lo, std::size_t hi)
{
    if (hi - lo < 2) {
        return 0;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t c = inversions(y, buf, lo, mid) + inversions(y, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (y[j] < y[i]) {
            c += mid - i;
            buf[k++] = y[j++];
        } else {
            buf[k++] = y[i++];
        }
    }
    while (i < mid) {
        buf[k++] = y[i++];
    }
    while (j < hi) {
        buf[k++] = y[j++];
    }
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              y.begin() + static_cast<std::ptrdiff_t>(lo));
    return c;
}

struct PairCounts {
    std::uint64_t concordant = 0; // strict in both variables
    std::uint64_t discordant = 0;
    std::uint64_t reward_unequal = 0;
};

// Knight's O(n log n) pair classification with ties.
PairCounts classify_pairs(std::span<const double> s, std::span<const double> r)
{
    const std::size_t n = s.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return s[a] < s[b] || (s[a] == s[b] && r[a] < r[b]);
    });
    std::vector<double> sorted_s(n), sorted_r(n), joint_ties;
    for (std::size_t k = 0; k < n; ++k) {
        sorted_s[k] = s[order[k]];
        sorted_r[k] = r[order[k]];
    }
    std::uint64_t both_tied = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted_s[j] == sorted_s[i] && sorted_r[j] == sorted_r[i]) {
            ++j;
        }
        const std::uint64_t m = j - i;
        both_tied += m * (m - 1) / 2;
        i = j;
    }
    const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    const std::uint64_t s_tied = tied_pairs({s.begin(), s.end()});
    const std::uint64_t r_tied = tied_pairs({r.begin(), r.end()});
    std::vector<double> buf(n);
    PairCounts pc;
    pc.discordant = inversions(sorted_r, buf, 0, n);
    pc.concordant = total - s_tied - r_tied + both_tied - pc.discordant;
    pc.reward_unequal = total - r_tied;
    return pc;
}

double sigmoid(double x) noexcept
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y)
{
    check_pair(x, y, 1);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return std::nullopt;
    }
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> scores, std::span<const double> rewards)
{
    check_pair(scores, rewards, 2);
    const auto rs = average_ranks(scores);
    const auto rr = average_ranks(rewards);
    return pearson(rs, rr);
}

std::optional<double> kendall(std::span<const double> scores, std::span<const double> rewards)
{
    check_pair(scores, rewards, 2);
    const PairCounts pc = classify_pairs(scores, rewards);
    const std::uint64_t decided = pc.concordant + pc.discordant;
    if (decided == 0) {
        return std::nullopt;
    }
    return (static_cast<double>(pc.concordant) - static_cast<double>(pc.discordant)) /
           static_cast<double>(decided);
}

std::optional<double> pairwise_accuracy(std::span<const double> scores,
                                        std::span<const double> rewards)
{
    check_pair(scores, rewards, 2);
    const PairCounts pc = classify_pairs(scores, rewards);
    if (pc.reward_unequal == 0) {
        return std::nullopt;
    }
    return static_cast<double>(pc.concordant) / static_cast<double>(pc.reward_unequal);
}

std::optional<double> success_auc(std::span<const double> scores, std::span<const double> labels)
{
    check_pair(scores, labels, 2);
    // Mann-Whitney U from average ranks; ties earn half credit.
    const auto ranks = average_ranks(scores);
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0.5) {
            pos_rank_sum += ranks[i];
            ++n_pos;
        }
    }
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        return std::nullopt;
    }
    const double np = static_cast<double>(n_pos);
    const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

std::optional<double> point_biserial(std::span<const double> scores,
                                     std::span<const double> labels)
{
    check_pair(scores, labels, 2);
    std::vector<double> binary(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        binary[i] = labels[i] >= 0.5 ? 1.0 : 0.0;
    }
    return pearson(scores, binary);
}

double brier_sigmoid(std::span<const double> scores, std::span<const double> rewards)
{
    check_pair(scores, rewards, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double d = sigmoid(scores[i]) - rewards[i];
        acc += d * d;
    }
    return acc / static_cast<double>(scores.size());
}

std::string_view metric_name(Metric m) noexcept
{
    switch (m) {
    case Metric::Spearman:
        return "spearman";
    case Metric::Kendall:
        return "kendall_tau";
    case Metric::PairwiseAccuracy:
        return "pairwise_accuracy";
    case Metric::SuccessAuc:
        return "success_auc";
    case Metric::PointBiserial:
        return "point_biserial";
    case Metric::Brier:
        return "brier_sigmoid";
    }
    return "?";
}

PromptMetrics prompt_metrics(std::span<const double> scores, std::span<const double> rewards,
                             double tau)
{
    std::vector<double> labels(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        labels[i] = rewards[i] >= tau ? 1.0 : 0.0;
    }
    PromptMetrics pm;
    pm.values[static_cast<std::size_t>(Metric::Spearman)] = spearman(scores, rewards);
    pm.values[static_cast<std::size_t>(Metric::Kendall)] = kendall(scores, rewards);
    pm.values[static_cast<std::size_t>(Metric::PairwiseAccuracy)] = pairwise_accuracy(scores, rewards);
    pm.values[static_cast<std::size_t>(Metric::SuccessAuc)] = success_auc(scores, labels);
    pm.values[static_cast<std::size_t>(Metric::PointBiserial)] = point_biserial(scores, labels);
    pm.values[static_cast<std::size_t>(Metric::Brier)] = brier_sigmoid(scores, rewards);
    return pm;
}

std::array<AggregateValue, 6> aggregate(std::span<const PromptMetrics> prompts, bool impute_zero)
{
    std::array<AggregateValue, 6> out{};
    for (std::size_t m = 0; m < out.size(); ++m) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const PromptMetrics& p : prompts) {
            if (p.values[m]) {
                sum += *p.values[m];
                ++count;
            } else if (impute_zero) {
                ++count;
            }
        }
        out[m].defined = count;
        if (count > 0) {
            out[m].mean = sum / static_cast<double>(count);
        }
    }
    return out;
}

double teacher_score(const model::PolicyModel& teacher, std::span<const TokenId> prompt,
                     const peercontext::PeerContext& context, std::span<const TokenId> rollout)
{
    if (rollout.empty()) {
        throw std::invalid_argument("teacher_score: empty rollout");
    }
    const auto conditioning = peercontext::teacher_conditioning(prompt, context);
    const auto lp = model::sequence_logprobs(teacher, conditioning, rollout);
    double sum = 0.0;
    for (double v : lp) {
        sum += v;
    }
    return sum / static_cast<double>(lp.size());
}

SignalAnalysis analyze_signal(const model::PolicyModel& model, const tasks::TaskSpec& task,
                              std::span<const tasks::ProblemInstance> prompts,
                              const SignalAnalysisConfig& config, std::uint64_t seed)
{
    const rollout::SamplingConfig sampling{config.group_size, config.temperature,
                                           config.max_response_len};
    SignalAnalysis out;
    std::vector<std::vector<PromptMetrics>> per_condition(config.conditions.size());
    for (const tasks::ProblemInstance& inst : prompts) {
        rollout::RolloutGroup g = rollout::sample_group(model, inst, sampling, seed, kAnalysisStep);
        rollout::score_and_partition(g, task, inst, config.tau);
        for (std::size_t c = 0; c < config.conditions.size(); ++c) {
            const auto variant = peercontext::ContextVariant::analysis(config.conditions[c]);
            std::vector<double> scores(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const peercontext::PeerContext ctx = peercontext::build_context(
                    variant, g, rollout::peer_sets(g, i), {}, config.context_budget);
                scores[i] = teacher_score(model, inst.prompt, ctx, g.rollouts[i].ids);
                out.records.push_back({g.prompt_id, i, config.conditions[c], scores[i], g.rewards[i]});
            }
            if (g.size() >= 2) {
                per_condition[c].push_back(prompt_metrics(scores, g.rewards, config.tau));
            }
        }
        out.groups.push_back(std::move(g));
    }
    for (std::size_t c = 0; c < config.conditions.size(); ++c) {
        out.conditions.push_back(
            {config.conditions[c], aggregate(per_condition[c], config.impute_zero), per_condition[c].size()});
    }
    return out;
}

} // namespace mopd::analysis
