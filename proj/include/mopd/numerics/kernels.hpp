// SPDX-License-Identifier: Apache-2.0
#pragma once

// Row-level kernels shared by the recording tape and the incremental decoder.
// Both paths go through these functions, so a logit computed either way is
// bit-identical. Reductions run index-ascending in double precision.

#include <cstddef>
#include <span>
#include <vector>

#include "mopd/numerics/tensor.hpp"

namespace mopd::numerics::kernels {

/// out[o] = sum_i x[i] * w(i, o); w is [in, out] row-major. Overwrites out.
void matvec(std::span<const double> x, const Tensor& w, std::span<double> out);

/// y = x * gain / sqrt(mean(x^2) + eps). Returns 1 / sqrt(mean(x^2) + eps).
double rmsnorm(std::span<const double> x, std::span<const double> gain, double eps,
               std::span<double> y);

double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

/// Stable log-sum-exp; -inf entries are allowed, +inf/NaN are not checked here.
double logsumexp(std::span<const double> x) noexcept;

/// y = x - logsumexp(x). y may alias x.
void log_softmax(std::span<const double> x, std::span<double> y) noexcept;

/// Causal attention for a single query row over keys/values [0, count).
/// q, keys and values are row-major with row stride `stride`; the head uses
/// columns [offset, offset + head_dim). probs receives the attention weights
/// (size >= count) and out the head output (size head_dim).
void attention_head(std::span<const double> q, const double* keys, const double* values,
                    std::size_t count, std::size_t stride, std::size_t offset,
                    std::size_t head_dim, std::span<double> probs, std::span<double> out);

} // namespace mopd::numerics::kernels
