// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mopd/numerics/tensor.hpp"

namespace mopd::numerics {

struct AdamConfig {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Linear warmup length in steps; 0 disables warmup.
    std::uint64_t warmup_steps = 0;
    /// Round updated parameters to the nearest float32 so in-memory weights
    /// always equal their checkpointed form.
    bool round_to_float32 = true;

    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;
};

/// Learning rate actually used at 1-based step `step`.
double scheduled_learning_rate(const AdamConfig& config, std::uint64_t step) noexcept;

/// One adaptive-moment update using each parameter's gradient slot. A
/// parameter without a gradient slot is skipped (its moments are untouched).
/// Throws ShapeError if the state was built for differently shaped parameters.
void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamConfig& config);

void zero_grads(std::span<Tensor* const> params);

} // namespace mopd::numerics
