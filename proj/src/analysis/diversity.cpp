// SPDX-License-Identifier: Apache-2.0
#include "mopd/analysis/diversity.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "mopd/tasks/tasks.hpp"

namespace mopd::analysis {

double distinct_n(std::span<const std::vector<TokenId>> responses, std::size_t n)
{
    if (n == 0) {
        throw std::invalid_argument("distinct_n: n must be >= 1");
    }
    std::vector<TokenId> stream;
    for (const auto& r : responses) {
        stream.insert(stream.end(), r.begin(), r.end());
    }
    if (stream.size() < n) {
        return 0.0;
    }
    std::set<std::vector<TokenId>> unique;
    const std::size_t total = stream.size() - n + 1;
    for (std::size_t i = 0; i < total; ++i) {
        unique.emplace(stream.begin() + static_cast<std::ptrdiff_t>(i),
                       stream.begin() + static_cast<std::ptrdiff_t>(i + n));
    }
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double jaccard_distance(const NodeMultiset& a, const NodeMultiset& b) noexcept
{
    std::uint64_t lo = 0, hi = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        lo += std::min(a[t], b[t]);
        hi += std::max(a[t], b[t]);
    }
    if (hi == 0) {
        return 0.0;
    }
    return 1.0 - static_cast<double>(lo) / static_cast<double>(hi);
}

std::optional<double> mean_pairwise_jaccard(std::span<const NodeMultiset> sets)
{
    if (sets.size() < 2) {
        return std::nullopt;
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            sum += jaccard_distance(sets[i], sets[j]);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

DiversityReport diversity(std::span<const std::vector<TokenId>> responses)
{
    DiversityReport out;
    out.responses = responses.size();
    std::vector<std::vector<TokenId>> extracted;
    std::vector<NodeMultiset> sets;
    for (const auto& r : responses) {
        extracted.push_back(tasks::extract_answer_block(std::span<const TokenId>(r)));
        if (const auto ast = tasks::parse_expression(std::span<const TokenId>(extracted.back()))) {
            sets.push_back(ast->node_counts());
        }
    }
    out.distinct_1 = distinct_n(extracted, 1);
    out.distinct_2 = distinct_n(extracted, 2);
    out.parsed = sets.size();
    out.ast_jaccard = mean_pairwise_jaccard(sets);
    return out;
}

} // namespace mopd::analysis
