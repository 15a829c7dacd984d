// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mopd/numerics/tensor.hpp"

namespace mopd::numerics {

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
    std::uint32_t id = 0;
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so a
/// reverse sweep visits every node after all of its consumers.
///
/// A tape built with `record = false` evaluates values only; backward() on it
/// is an error. Parameters registered with parameter() receive their
/// gradients in the parameter tensor's own gradient slot (accumulated).
class Tape {
public:
    /// upstream: adjoint of the op output; input_adjoint: adjoint of the op input
    /// (accumulate into it).
    using UnaryBackward =
        std::function<void(std::span<const double> upstream, std::span<double> input_adjoint)>;

    explicit Tape(bool record = true);
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    bool recording() const noexcept { return record_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Tensor value);
    /// Borrowed constant. `value` must outlive the tape.
    Var constant_ref(const Tensor& value);
    /// Trainable leaf. `param` must outlive the tape.
    Var parameter(Tensor& param);

    const Tensor& value(Var v) const;
    double scalar(Var v) const;

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add_bias(Var a, Var bias);
    Var mul(Var a, Var b);
    Var scale(Var a, double factor);
    Var gelu(Var a);
    Var tanh(Var a);
    Var rmsnorm(Var x, Var gain, double eps);
    /// rows[t] = table[ids[t]].
    Var gather_rows(Var table, std::span<const std::size_t> ids);
    Var slice_rows(Var x, std::size_t begin, std::size_t count);
    /// Multi-head causal self-attention over [T, d] inputs.
    Var causal_attention(Var q, Var k, Var v, std::size_t heads);
    Var log_softmax_rows(Var x);
    /// out[t] = x[t, ids[t]].
    Var pick(Var x, std::span<const std::size_t> ids);
    Var sum(Var x);
    /// sum_i weights[i] * x[i].
    Var weighted_sum(Var x, std::span<const double> weights);
    /// Fused op with a caller-supplied adjoint rule.
    Var unary_custom(Var input, Tensor value, UnaryBackward backward);

    /// Reverse sweep from a scalar node.
    void backward(Var loss);

private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor* param = nullptr;
        bool needs_grad = false;
        std::vector<double> adjoint;
        std::function<void(Tape&)> backward;
    };

    const Tensor& val(std::uint32_t id) const;
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }
    std::span<double> adj(Var v);
    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> backward);
    Var out_of(std::uint32_t id) const { return Var{id}; }

    bool record_;
    std::vector<Node> nodes_;
};

} // namespace mopd::numerics
