// SPDX-License-Identifier: Apache-2.0
#include "mopd/distill/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mopd/numerics/kernels.hpp"

namespace mopd::distill {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_inputs(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || a.size() != b.size()) {
        throw std::invalid_argument("divergence: distributions must be nonempty and equal-sized");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (double x : {a[i], b[i]}) {
            if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
                std::ostringstream os;
                os << "divergence: invalid log-probability " << x << " at index " << i;
                throw std::invalid_argument(os.str());
            }
        }
    }
    if (numerics::kernels::logsumexp(a) == kNegInf || numerics::kernels::logsumexp(b) == kNegInf) {
        throw std::invalid_argument("divergence: distribution with zero total mass");
    }
}

double log_add(double a, double b) noexcept
{
    if (a == kNegInf) {
        return b;
    }
    if (b == kNegInf) {
        return a;
    }
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Core evaluation on K outcomes given unnormalized log-masses. Writes
// dD/d(rs[o]) into grad.
double evaluate(DivergenceKind kind, std::span<const double> rs, std::span<const double> rt,
                std::span<double> grad)
{
    const std::size_t K = rs.size();
    const double zs = numerics::kernels::logsumexp(rs);
    const double zt = numerics::kernels::logsumexp(rt);
    double value = 0.0;
    double centre = 0.0;
    std::vector<double> p(K);
    for (std::size_t o = 0; o < K; ++o) {
        const double a = rs[o] - zs;
        const double b = rt[o] - zt;
        p[o] = std::exp(a);
        const double q = std::exp(b);
        double pg = 0.0; // p_o * dD/dp_o
        switch (kind) {
        case DivergenceKind::ReverseKL:
            if (p[o] > 0.0) {
                pg = p[o] * (a - b);
                value += pg;
            }
            break;
        case DivergenceKind::ForwardKL:
            if (q > 0.0) {
                value += q * (b - a);
                pg = -q;
            }
            break;
        case DivergenceKind::JensenShannon: {
            const double lm = log_add(a, b) - std::numbers::ln2;
            if (p[o] > 0.0) {
                pg = 0.5 * p[o] * (a - lm);
                value += pg;
            }
            if (q > 0.0) {
                value += 0.5 * q * (b - lm);
            }
            break;
        }
        }
        grad[o] = pg;
        centre += pg;
    }
    for (std::size_t o = 0; o < K; ++o) {
        grad[o] -= p[o] * centre;
    }
    return std::max(value, 0.0);
}

} // namespace

std::string_view divergence_name(DivergenceKind k) noexcept
{
    switch (k) {
    case DivergenceKind::ForwardKL:
        return "forward_kl";
    case DivergenceKind::ReverseKL:
        return "reverse_kl";
    case DivergenceKind::JensenShannon:
        return "js";
    }
    return "?";
}

DivergenceKind parse_divergence(std::string_view name)
{
    if (name == "forward_kl") {
        return DivergenceKind::ForwardKL;
    }
    if (name == "reverse_kl") {
        return DivergenceKind::ReverseKL;
    }
    if (name == "js") {
        return DivergenceKind::JensenShannon;
    }
    throw std::invalid_argument("unknown divergence: " + std::string(name));
}

DivergenceValue full_support_divergence(DivergenceKind kind, std::span<const double> student_logp,
                                        std::span<const double> teacher_logp)
{
    check_inputs(student_logp, teacher_logp);
    DivergenceValue out;
    out.grad.resize(student_logp.size());
    out.value = evaluate(kind, student_logp, teacher_logp, out.grad);
    return out;
}

DivergenceValue divergence(DivergenceKind kind, std::span<const double> student_logp,
                           std::span<const double> teacher_logp, std::size_t top_k)
{
    const std::size_t V = student_logp.size();
    if (top_k == 0) {
        throw std::invalid_argument("divergence: top_k must be >= 1");
    }
    if (top_k >= V) {
        return full_support_divergence(kind, student_logp, teacher_logp);
    }
    check_inputs(student_logp, teacher_logp);

    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k), order.end(),
                      [&](std::size_t x, std::size_t y) {
                          return teacher_logp[x] > teacher_logp[y] ||
                                 (teacher_logp[x] == teacher_logp[y] && x < y);
                      });
    std::vector<bool> in_support(V, false);
    for (std::size_t j = 0; j < top_k; ++j) {
        in_support[order[j]] = true;
    }

    // Support in ascending index order, then the residual bucket.
    std::vector<std::size_t> support;
    std::vector<double> rs, rt, tail_s, tail_t;
    for (std::size_t v = 0; v < V; ++v) {
        if (in_support[v]) {
            support.push_back(v);
            rs.push_back(student_logp[v]);
            rt.push_back(teacher_logp[v]);
        } else {
            tail_s.push_back(student_logp[v]);
            tail_t.push_back(teacher_logp[v]);
        }
    }
    const double rest_s = numerics::kernels::logsumexp(tail_s);
    rs.push_back(rest_s);
    rt.push_back(numerics::kernels::logsumexp(tail_t));

    std::vector<double> g(rs.size());
    DivergenceValue out;
    out.value = evaluate(kind, rs, rt, g);
    out.grad.assign(V, 0.0);
    for (std::size_t j = 0; j < support.size(); ++j) {
        out.grad[support[j]] = g[j];
    }
    // d rest_s / d l_v = exp(l_v - rest_s) for tail tokens.
    const double g_rest = g.back();
    if (rest_s != kNegInf) {
        for (std::size_t v = 0; v < V; ++v) {
            if (!in_support[v]) {
                out.grad[v] = g_rest * std::exp(student_logp[v] - rest_s);
            }
        }
    }
    return out;
}

numerics::Var divergence_rows(numerics::Tape& tape, numerics::Var student_logp,
                              const numerics::Tensor& teacher_logp, DivergenceKind kind,
                              std::size_t top_k)
{
    const numerics::Tensor& s = tape.value(student_logp);
    if (s.shape() != teacher_logp.shape() || s.shape().size() != 2) {
        throw numerics::ShapeError("divergence_rows: student and teacher must both be [T, V]");
    }
    const std::size_t T = s.rows();
    const std::size_t V = s.cols();
    auto grads = std::make_shared<std::vector<double>>(T * V);
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        DivergenceValue d = divergence(kind, s.row(t), teacher_logp.row(t), top_k);
        total += d.value;
        std::copy(d.grad.begin(), d.grad.end(), grads->begin() + static_cast<std::ptrdiff_t>(t * V));
    }
    numerics::Tensor value(numerics::Shape{1}, total);
    return tape.unary_custom(student_logp, std::move(value),
                             [grads](std::span<const double> up, std::span<double> adj) {
                                 const double u = up[0];
                                 for (std::size_t i = 0; i < adj.size(); ++i) {
                                     adj[i] += u * (*grads)[i];
                                 }
                             });
}

} // namespace mopd::distill
