// SPDX-License-Identifier: Apache-2.0
#include "mopd/numerics/tape.hpp"

#include <cmath>

#include "mopd/numerics/kernels.hpp"

namespace mopd::numerics {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
    }
}

} // namespace

Tape::Tape(bool record)
    : record_(record)
{
    nodes_.reserve(64);
}

const Tensor& Tape::val(std::uint32_t id) const
{
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.owned;
}

const Tensor& Tape::value(Var v) const
{
    if (v.id >= nodes_.size()) {
        throw std::out_of_range("Var does not belong to this tape");
    }
    return val(v.id);
}

double Tape::scalar(Var v) const
{
    const Tensor& t = value(v);
    if (t.size() != 1) {
        throw ShapeError("scalar(): node is not a scalar, shape " + shape_string(t.shape()));
    }
    return t[0];
}

std::span<double> Tape::adj(Var v)
{
    Node& n = nodes_[v.id];
    if (n.adjoint.empty()) {
        n.adjoint.assign(val(v.id).size(), 0.0);
    }
    return n.adjoint;
}

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> backward)
{
    Node n;
    n.owned = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value)
{
    return push(std::move(value), false, {});
}

Var Tape::constant_ref(const Tensor& value)
{
    Node n;
    n.borrowed = &value;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Tensor& param)
{
    Node n;
    n.borrowed = &param;
    n.param = record_ ? &param : nullptr;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::matmul(Var a, Var b)
{
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    const std::size_t m = A.rows();
    const std::size_t k = A.cols();
    const std::size_t n = B.cols();
    if (B.rank() != 2 || B.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ " + shape_string(A.shape()) + " x " +
                         shape_string(B.shape()));
    }
    Tensor out({m, n});
    for (std::size_t r = 0; r < m; ++r) {
        kernels::matvec(A.row(r), B, out.row(r));
    }
    const bool ng = needs(a) || needs(b);
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), ng, [a, b, self, m, k, n](Tape& t) {
        const std::span<const double> dc = t.nodes_[self].adjoint;
        const Tensor& A = t.val(a.id);
        const Tensor& B = t.val(b.id);
        if (t.needs(a)) {
            auto da = t.adj(a);
            for (std::size_t r = 0; r < m; ++r) {
                const double* dcr = dc.data() + r * n;
                for (std::size_t i = 0; i < k; ++i) {
                    const double* br = B.values().data() + i * n;
                    double s = 0.0;
                    for (std::size_t o = 0; o < n; ++o) {
                        s += dcr[o] * br[o];
                    }
                    da[r * k + i] += s;
                }
            }
        }
        if (t.needs(b)) {
            auto db = t.adj(b);
            for (std::size_t r = 0; r < m; ++r) {
                const double* dcr = dc.data() + r * n;
                for (std::size_t i = 0; i < k; ++i) {
                    const double ai = A.values()[r * k + i];
                    double* dbr = db.data() + i * n;
                    for (std::size_t o = 0; o < n; ++o) {
                        dbr[o] += ai * dcr[o];
                    }
                }
            }
        }
    });
}

Var Tape::add(Var a, Var b)
{
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    require_same_shape(A, B, "add");
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        out[i] = A[i] + B[i];
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(b), [a, b, self](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        for (Var in : {a, b}) {
            if (t.needs(in)) {
                auto d = t.adj(in);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    d[i] += g[i];
                }
            }
        }
    });
}

Var Tape::add_bias(Var a, Var bias)
{
    const Tensor& A = val(a.id);
    const Tensor& Bv = val(bias.id);
    const std::size_t n = A.cols();
    if (Bv.size() != n) {
        throw ShapeError("add_bias: bias length " + std::to_string(Bv.size()) +
                         " does not match width " + std::to_string(n));
    }
    Tensor out(A.shape());
    for (std::size_t r = 0; r < A.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out.at(r, c) = A.at(r, c) + Bv[c];
        }
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    const std::size_t rows = A.rows();
    return push(std::move(out), needs(a) || needs(bias), [a, bias, self, rows, n](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        if (t.needs(a)) {
            auto d = t.adj(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i];
            }
        }
        if (t.needs(bias)) {
            auto d = t.adj(bias);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    d[c] += g[r * n + c];
                }
            }
        }
    });
}

Var Tape::mul(Var a, Var b)
{
    const Tensor& A = val(a.id);
    const Tensor& B = val(b.id);
    require_same_shape(A, B, "mul");
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        out[i] = A[i] * B[i];
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(b), [a, b, self](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        const Tensor& A = t.val(a.id);
        const Tensor& B = t.val(b.id);
        if (t.needs(a)) {
            auto d = t.adj(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i] * B[i];
            }
        }
        if (t.needs(b)) {
            auto d = t.adj(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i] * A[i];
            }
        }
    });
}

Var Tape::scale(Var a, double factor)
{
    const Tensor& A = val(a.id);
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        out[i] = A[i] * factor;
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [a, self, factor](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        auto d = t.adj(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            d[i] += g[i] * factor;
        }
    });
}

Var Tape::gelu(Var a)
{
    const Tensor& A = val(a.id);
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        out[i] = kernels::gelu(A[i]);
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [a, self](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        const Tensor& A = t.val(a.id);
        auto d = t.adj(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            d[i] += g[i] * kernels::gelu_derivative(A[i]);
        }
    });
}

Var Tape::tanh(Var a)
{
    const Tensor& A = val(a.id);
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        out[i] = std::tanh(A[i]);
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [a, self](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        const Tensor& y = t.val(self);
        auto d = t.adj(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            d[i] += g[i] * (1.0 - y[i] * y[i]);
        }
    });
}

Var Tape::rmsnorm(Var x, Var gain, double eps)
{
    const Tensor& X = val(x.id);
    const Tensor& G = val(gain.id);
    const std::size_t d = X.cols();
    if (G.size() != d) {
        throw ShapeError("rmsnorm: gain length mismatch");
    }
    const std::size_t rows = X.rows();
    Tensor out(X.shape());
    std::vector<double> inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        inv[r] = kernels::rmsnorm(X.row(r), G.values(), eps, out.row(r));
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(x) || needs(gain),
                [x, gain, self, rows, d, inv = std::move(inv)](Tape& t) {
                    const std::span<const double> g = t.nodes_[self].adjoint;
                    const Tensor& X = t.val(x.id);
                    const Tensor& G = t.val(gain.id);
                    if (t.needs(x)) {
                        auto dx = t.adj(x);
                        for (std::size_t r = 0; r < rows; ++r) {
                            const double ir = inv[r];
                            double dotp = 0.0;
                            for (std::size_t c = 0; c < d; ++c) {
                                dotp += G[c] * g[r * d + c] * X[r * d + c];
                            }
                            const double coef = ir * ir * ir * dotp / static_cast<double>(d);
                            for (std::size_t c = 0; c < d; ++c) {
                                dx[r * d + c] += ir * G[c] * g[r * d + c] - coef * X[r * d + c];
                            }
                        }
                    }
                    if (t.needs(gain)) {
                        auto dg = t.adj(gain);
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < d; ++c) {
                                dg[c] += g[r * d + c] * X[r * d + c] * inv[r];
                            }
                        }
                    }
                });
}

Var Tape::gather_rows(Var table, std::span<const std::size_t> ids)
{
    const Tensor& T = val(table.id);
    const std::size_t d = T.cols();
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    if (idv.empty()) {
        throw ShapeError("gather_rows: empty id list");
    }
    Tensor out({idv.size(), d});
    for (std::size_t r = 0; r < idv.size(); ++r) {
        if (idv[r] >= T.rows()) {
            throw std::out_of_range("gather_rows: id " + std::to_string(idv[r]) +
                                    " out of range for table with " +
                                    std::to_string(T.rows()) + " rows");
        }
        const auto src = T.row(idv[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(table), [table, self, d, idv = std::move(idv)](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        auto dt = t.adj(table);
        for (std::size_t r = 0; r < idv.size(); ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                dt[idv[r] * d + c] += g[r * d + c];
            }
        }
    });
}

Var Tape::slice_rows(Var x, std::size_t begin, std::size_t count)
{
    const Tensor& X = val(x.id);
    if (count == 0 || begin + count > X.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         std::to_string(X.rows()) + " rows");
    }
    const std::size_t d = X.cols();
    Tensor out({count, d});
    std::copy_n(X.values().begin() + static_cast<std::ptrdiff_t>(begin * d), count * d,
                out.values().begin());
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(x), [x, self, begin, d](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        auto dx = t.adj(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            dx[begin * d + i] += g[i];
        }
    });
}

Var Tape::causal_attention(Var q, Var k, Var v, std::size_t heads)
{
    const Tensor& Q = val(q.id);
    const Tensor& K = val(k.id);
    const Tensor& V = val(v.id);
    require_same_shape(Q, K, "causal_attention");
    require_same_shape(Q, V, "causal_attention");
    const std::size_t T = Q.rows();
    const std::size_t d = Q.cols();
    if (heads == 0 || d % heads != 0) {
        throw ShapeError("causal_attention: width not divisible by head count");
    }
    const std::size_t hd = d / heads;
    Tensor out({T, d});
    // probs[h][t][j], j <= t, stored densely as T x T per head.
    std::vector<double> probs(heads * T * T, 0.0);
    std::vector<double> head_out(hd);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t h = 0; h < heads; ++h) {
            std::span<double> p(probs.data() + (h * T + t) * T, T);
            kernels::attention_head(Q.row(t), K.values().data(), V.values().data(), t + 1, d,
                                    h * hd, hd, p, head_out);
            std::copy(head_out.begin(), head_out.end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(h * hd));
        }
    }
    const bool ng = needs(q) || needs(k) || needs(v);
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), ng,
                [q, k, v, self, T, d, heads, hd, probs = std::move(probs)](Tape& t) {
                    const std::span<const double> g = t.nodes_[self].adjoint;
                    const Tensor& Q = t.val(q.id);
                    const Tensor& K = t.val(k.id);
                    const Tensor& V = t.val(v.id);
                    std::vector<double> dq(T * d, 0.0), dk(T * d, 0.0), dv(T * d, 0.0);
                    std::vector<double> dp(T);
                    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
                    for (std::size_t h = 0; h < heads; ++h) {
                        const std::size_t off = h * hd;
                        for (std::size_t i = 0; i < T; ++i) {
                            const double* p = probs.data() + (h * T + i) * T;
                            const double* gi = g.data() + i * d + off;
                            double pdp = 0.0;
                            for (std::size_t j = 0; j <= i; ++j) {
                                const double* vj = V.values().data() + j * d + off;
                                double s = 0.0;
                                for (std::size_t c = 0; c < hd; ++c) {
                                    s += gi[c] * vj[c];
                                    dv[j * d + off + c] += p[j] * gi[c];
                                }
                                dp[j] = s;
                                pdp += p[j] * s;
                            }
                            for (std::size_t j = 0; j <= i; ++j) {
                                const double ds = p[j] * (dp[j] - pdp) * scale;
                                const double* kj = K.values().data() + j * d + off;
                                const double* qi = Q.values().data() + i * d + off;
                                for (std::size_t c = 0; c < hd; ++c) {
                                    dq[i * d + off + c] += ds * kj[c];
                                    dk[j * d + off + c] += ds * qi[c];
                                }
                            }
                        }
                    }
                    const std::pair<Var, const std::vector<double>*> parts[] = {
                        {q, &dq}, {k, &dk}, {v, &dv}};
                    for (const auto& [in, src] : parts) {
                        if (t.needs(in)) {
                            auto dst = t.adj(in);
                            for (std::size_t i = 0; i < dst.size(); ++i) {
                                dst[i] += (*src)[i];
                            }
                        }
                    }
                });
}

Var Tape::log_softmax_rows(Var x)
{
    const Tensor& X = val(x.id);
    Tensor out(X.shape());
    for (std::size_t r = 0; r < X.rows(); ++r) {
        kernels::log_softmax(X.row(r), out.row(r));
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    const std::size_t rows = X.rows();
    const std::size_t n = X.cols();
    return push(std::move(out), needs(x), [x, self, rows, n](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        const Tensor& Y = t.val(self);
        auto dx = t.adj(x);
        for (std::size_t r = 0; r < rows; ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                gs += g[r * n + c];
            }
            for (std::size_t c = 0; c < n; ++c) {
                dx[r * n + c] += g[r * n + c] - std::exp(Y[r * n + c]) * gs;
            }
        }
    });
}

Var Tape::pick(Var x, std::span<const std::size_t> ids)
{
    const Tensor& X = val(x.id);
    if (ids.size() != X.rows()) {
        throw ShapeError("pick: id count does not match row count");
    }
    const std::size_t n = X.cols();
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    Tensor out({idv.size()});
    for (std::size_t r = 0; r < idv.size(); ++r) {
        if (idv[r] >= n) {
            throw std::out_of_range("pick: column id out of range");
        }
        out[r] = X.at(r, idv[r]);
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(x), [x, self, n, idv = std::move(idv)](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        auto dx = t.adj(x);
        for (std::size_t r = 0; r < idv.size(); ++r) {
            dx[r * n + idv[r]] += g[r];
        }
    });
}

Var Tape::sum(Var x)
{
    const Tensor& X = val(x.id);
    double s = 0.0;
    for (double v : X.values()) {
        s += v;
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(Tensor({1}, std::vector<double>{s}), needs(x), [x, self](Tape& t) {
        const double g = t.nodes_[self].adjoint[0];
        auto dx = t.adj(x);
        for (double& d : dx) {
            d += g;
        }
    });
}

Var Tape::weighted_sum(Var x, std::span<const double> weights)
{
    const Tensor& X = val(x.id);
    if (weights.size() != X.size()) {
        throw ShapeError("weighted_sum: weight count mismatch");
    }
    std::vector<double> w(weights.begin(), weights.end());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += w[i] * X[i];
    }
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(Tensor({1}, std::vector<double>{s}), needs(x), [x, self, w = std::move(w)](Tape& t) {
        const double g = t.nodes_[self].adjoint[0];
        auto dx = t.adj(x);
        for (std::size_t i = 0; i < w.size(); ++i) {
            dx[i] += g * w[i];
        }
    });
}

Var Tape::unary_custom(Var input, Tensor value, UnaryBackward backward)
{
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(value), needs(input), [input, self, bw = std::move(backward)](Tape& t) {
        const std::span<const double> g = t.nodes_[self].adjoint;
        bw(g, t.adj(input));
    });
}

void Tape::backward(Var loss)
{
    if (!record_) {
        throw std::logic_error("backward() on a tape built without recording");
    }
    if (loss.id >= nodes_.size()) {
        throw std::out_of_range("backward(): Var does not belong to this tape");
    }
    if (val(loss.id).size() != 1) {
        throw ShapeError("backward(): loss must be a scalar, got shape " +
                         shape_string(val(loss.id).shape()));
    }
    if (!nodes_[loss.id].needs_grad) {
        return;
    }
    adj(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.adjoint.empty()) {
            continue;
        }
        if (n.backward) {
            n.backward(*this);
        }
        if (n.param != nullptr) {
            n.param->ensure_grad();
            auto dst = n.param->grad();
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += n.adjoint[j];
            }
        }
    }
}

} // namespace mopd::numerics
