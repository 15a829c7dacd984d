// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mopd/tasks/expression.hpp"
#include "mopd/tokens.hpp"

namespace mopd::analysis {

using NodeMultiset = std::array<std::uint32_t, tasks::kAstNodeTypes>;

/// Unique n-grams over total n-grams in the concatenation of all responses;
/// 0 when the stream is shorter than n. Throws on n == 0.
double distinct_n(std::span<const std::vector<TokenId>> responses, std::size_t n);

/// 1 - sum_t min(a_t, b_t) / sum_t max(a_t, b_t); 0 for two empty multisets.
double jaccard_distance(const NodeMultiset& a, const NodeMultiset& b) noexcept;

/// Mean pairwise distance; nullopt when fewer than two multisets are given.
std::optional<double> mean_pairwise_jaccard(std::span<const NodeMultiset> sets);

struct DiversityReport {
    double distinct_1 = 0.0;
    double distinct_2 = 0.0;
    std::optional<double> ast_jaccard; // absent when < 2 responses parse
    std::size_t parsed = 0;
    std::size_t responses = 0;
};

/// Extracts each response's last answer block (whole-response fallback),
/// then measures n-gram diversity on the extracted streams and AST diversity
/// on those that parse as expressions.
DiversityReport diversity(std::span<const std::vector<TokenId>> responses);

} // namespace mopd::analysis
