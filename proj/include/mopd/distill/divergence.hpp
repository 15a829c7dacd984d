// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mopd/numerics/tape.hpp"

namespace mopd::distill {

/// Student p, teacher q. ReverseKL = KL(p || q), ForwardKL = KL(q || p),
/// JensenShannon = (KL(p || m) + KL(q || m)) / 2 with m = (p + q) / 2.
enum class DivergenceKind : std::uint8_t { ForwardKL, ReverseKL, JensenShannon };

std::string_view divergence_name(DivergenceKind k) noexcept;
/// Accepts "forward_kl", "reverse_kl", "js".
DivergenceKind parse_divergence(std::string_view name);

struct DivergenceValue {
    double value = 0.0;
    /// dD / d(student log-prob), one entry per vocabulary item.
    std::vector<double> grad;
};

/// Divergence on the full vocabulary. Inputs are log-probabilities; -inf is
/// allowed (zero mass), NaN and +inf are rejected with std::invalid_argument.
/// Both sides are renormalized before evaluation.
DivergenceValue full_support_divergence(DivergenceKind kind, std::span<const double> student_logp,
                                        std::span<const double> teacher_logp);

/// Restricts both sides to the teacher's top-k tokens (ties to the lower
/// index) plus one bucket holding each side's remaining mass. top_k >= V is
/// exactly full_support_divergence.
DivergenceValue divergence(DivergenceKind kind, std::span<const double> student_logp,
                           std::span<const double> teacher_logp, std::size_t top_k);

/// Sum over rows of divergence(student row, teacher row). `student_logp` is a
/// [T, V] tape node; the teacher is a constant. Returns a scalar node.
numerics::Var divergence_rows(numerics::Tape& tape, numerics::Var student_logp,
                              const numerics::Tensor& teacher_logp, DivergenceKind kind,
                              std::size_t top_k);

} // namespace mopd::distill
