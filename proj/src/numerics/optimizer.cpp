// SPDX-License-Identifier: Apache-2.0
#include "mopd/numerics/optimizer.hpp"

#include <cmath>

namespace mopd::numerics {

double scheduled_learning_rate(const AdamConfig& config, std::uint64_t step) noexcept
{
    if (config.warmup_steps == 0 || step >= config.warmup_steps) {
        return config.learning_rate;
    }
    return config.learning_rate * static_cast<double>(step) /
           static_cast<double>(config.warmup_steps);
}

void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamConfig& config)
{
    if (state.first_moment.empty() && state.step == 0) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (std::size_t p = 0; p < params.size(); ++p) {
            state.first_moment[p].assign(params[p]->size(), 0.0);
            state.second_moment[p].assign(params[p]->size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state holds " +
                         std::to_string(state.first_moment.size()) + " moments for " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& t = *params[p];
        if (state.first_moment[p].size() != t.size() || state.second_moment[p].size() != t.size()) {
            throw ShapeError("adam_step: moment shape mismatch for parameter " + std::to_string(p));
        }
        if (t.has_grad() && t.grad().size() != t.size()) {
            throw ShapeError("adam_step: gradient shape mismatch for parameter " + std::to_string(p));
        }
    }

    state.step += 1;
    const double lr = scheduled_learning_rate(config, state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        if (!t.has_grad()) {
            continue;
        }
        auto g = t.grad();
        auto v = t.values();
        auto& m1 = state.first_moment[p];
        auto& m2 = state.second_moment[p];
        for (std::size_t i = 0; i < v.size(); ++i) {
            m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g[i];
            m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double update = lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + config.epsilon);
            double next = v[i] - update;
            if (config.round_to_float32) {
                next = static_cast<double>(static_cast<float>(next));
            }
            v[i] = next;
        }
    }
}

void zero_grads(std::span<Tensor* const> params)
{
    for (Tensor* t : params) {
        t->zero_grad();
    }
}

} // namespace mopd::numerics
