// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mopd/numerics/tape.hpp"

namespace mopd::numerics {

/// Builds a scalar loss on `tape` from the registered parameter leaves.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradcheckReport {
    /// max over coordinates of |analytic - fd| / max(|analytic| + |fd|, 1e-6);
    /// the floor keeps round-off on zero derivatives from counting as error.
    double max_relative_error = 0.0;
    std::size_t worst_parameter = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    /// Set when a central difference grows as the step shrinks (a jump) or
    /// turns non-finite; such points are never reported as passing.
    bool non_differentiable = false;
    std::string diagnostic;

    bool passed(double tolerance) const noexcept
    {
        return !non_differentiable && max_relative_error < tolerance;
    }
};

/// Compares reverse-mode gradients against central differences with step
/// `eps` in (0, 1e-2]. Parameter gradient slots are overwritten.
GradcheckReport gradcheck(const LossBuilder& build, std::span<Tensor* const> params, double eps);

/// Validated log-softmax of a finite logit vector (length >= 1).
std::vector<double> log_softmax(std::span<const double> logits);

} // namespace mopd::numerics
