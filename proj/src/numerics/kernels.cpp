// SPDX-License-Identifier: Apache-2.0
#include "mopd/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mopd::numerics::kernels {

void matvec(std::span<const double> x, const Tensor& w, std::span<double> out)
{
    const std::size_t in = w.rows();
    const std::size_t n = w.cols();
    std::fill(out.begin(), out.end(), 0.0);
    const double* wp = w.values().data();
    double* op = out.data();
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        const double* wr = wp + i * n;
        for (std::size_t o = 0; o < n; ++o) {
            op[o] += xi * wr[o];
        }
    }
}

double rmsnorm(std::span<const double> x, std::span<const double> gain, double eps,
               std::span<double> y)
{
    double sq = 0.0;
    for (double v : x) {
        sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sq / static_cast<double>(x.size()) + eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] * inv * gain[i];
    }
    return inv;
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

double gelu(double x) noexcept
{
    const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * x * (1.0 + th);
}

double gelu_derivative(double x) noexcept
{
    const double inner = kGeluC * (x + kGeluA * x * x * x);
    const double th = std::tanh(inner);
    const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner;
}

double logsumexp(std::span<const double> x) noexcept
{
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x) {
        mx = std::max(mx, v);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
        return mx;
    }
    double s = 0.0;
    for (double v : x) {
        s += std::exp(v - mx);
    }
    return mx + std::log(s);
}

void log_softmax(std::span<const double> x, std::span<double> y) noexcept
{
    const double lse = logsumexp(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] - lse;
    }
}

void attention_head(std::span<const double> q, const double* keys, const double* values,
                    std::size_t count, std::size_t stride, std::size_t offset,
                    std::size_t head_dim, std::span<double> probs, std::span<double> out)
{
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
        const double* k = keys + j * stride + offset;
        double s = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) {
            s += q[offset + c] * k[c];
        }
        s *= scale;
        probs[j] = s;
        mx = std::max(mx, s);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
        probs[j] = std::exp(probs[j] - mx);
        z += probs[j];
    }
    for (std::size_t j = 0; j < count; ++j) {
        probs[j] /= z;
    }
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(head_dim), 0.0);
    for (std::size_t j = 0; j < count; ++j) {
        const double* v = values + j * stride + offset;
        const double p = probs[j];
        for (std::size_t c = 0; c < head_dim; ++c) {
            out[c] += p * v[c];
        }
    }
}

} // namespace mopd::numerics::kernels
