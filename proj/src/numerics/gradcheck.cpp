// SPDX-License-Identifier: Apache-2.0
#include "mopd/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mopd/numerics/kernels.hpp"

namespace mopd::numerics {

namespace {

// Central differences of an O(1) loss carry round-off near 1e-17 / eps, so
// derivatives below this are indistinguishable from zero.
constexpr double kNoiseFloor = 1e-6;

double evaluate(const LossBuilder& build, std::span<Tensor* const> params)
{
    Tape tape(false);
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (Tensor* p : params) {
        leaves.push_back(tape.constant_ref(*p));
    }
    return tape.scalar(build(tape, leaves));
}

double central_difference(const LossBuilder& build, std::span<Tensor* const> params,
                          std::size_t p, std::size_t i, double eps)
{
    double& x = (*params[p])[i];
    const double x0 = x;
    x = x0 + eps;
    const double hi = evaluate(build, params);
    x = x0 - eps;
    const double lo = evaluate(build, params);
    x = x0;
    return (hi - lo) / (2.0 * eps);
}

} // namespace

GradcheckReport gradcheck(const LossBuilder& build, std::span<Tensor* const> params, double eps)
{
    if (!(eps > 0.0 && eps <= 1e-2)) {
        throw std::invalid_argument("gradcheck: eps must lie in (0, 1e-2]");
    }
    for (Tensor* p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    {
        Tape tape(true);
        std::vector<Var> leaves;
        for (Tensor* p : params) {
            leaves.push_back(tape.parameter(*p));
        }
        tape.backward(build(tape, leaves));
    }

    GradcheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
            const double analytic = params[p]->grad()[i];
            const double numeric = central_difference(build, params, p, i, eps);
            report.coordinates += 1;
            if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
                report.non_differentiable = true;
                report.diagnostic = "non-finite derivative at parameter " + std::to_string(p) +
                                    " index " + std::to_string(i);
                continue;
            }
            const double err = std::abs(analytic - numeric) /
                               std::max(std::abs(analytic) + std::abs(numeric), kNoiseFloor);
            if (err > 1e-6) {
                const double finer = central_difference(build, params, p, i, eps / 10.0);
                if (std::abs(finer) > kNoiseFloor && std::abs(finer) > std::abs(numeric) &&
                    std::abs(finer - numeric) > 0.5 * std::abs(finer)) {
                    report.non_differentiable = true;
                    std::ostringstream os;
                    os << "central difference grows as eps shrinks at parameter " << p
                       << " index " << i << " (" << numeric << " -> " << finer << ")";
                    report.diagnostic = os.str();
                }
            }
            if (err > report.max_relative_error) {
                report.max_relative_error = err;
                report.worst_parameter = p;
                report.worst_index = i;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

std::vector<double> log_softmax(std::span<const double> logits)
{
    if (logits.empty()) {
        throw std::invalid_argument("log_softmax: empty logit vector");
    }
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) {
            std::ostringstream os;
            os << "log_softmax: non-finite logit " << logits[i] << " at index " << i;
            throw std::invalid_argument(os.str());
        }
    }
    std::vector<double> out(logits.size());
    kernels::log_softmax(logits, out);
    return out;
}

} // namespace mopd::numerics
