#include "svfm/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "svfm/errors.hpp"

namespace svfm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using NodeId = Graph::NodeId;

ConstMapMat as_mat(const Tensor& t) { return ConstMapMat(t.data().data(), t.rows(), t.cols()); }
MapMat as_mat(Tensor& t) { return MapMat(t.data().data(), t.rows(), t.cols()); }

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void same_graph(const char* op, const Var& a, const Var& b) {
    if (&a.graph() != &b.graph()) throw std::invalid_argument(std::string(op) + ": operands on different graphs");
}

// True when `small` broadcasts to `full` along the leading axis.
bool broadcasts_to(const Shape& small, const Shape& full) {
    if (small == full) return true;
    if (full.empty()) return false;
    if (small.size() + 1 == full.size() && std::equal(small.begin(), small.end(), full.begin() + 1)) return true;
    if (small.size() == full.size() && small[0] == 1 && std::equal(small.begin() + 1, small.end(), full.begin() + 1)) {
        return true;
    }
    return false;
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    if (broadcasts_to(b, a)) return a;
    if (broadcasts_to(a, b)) return b;
    shape_fail(op, a, b);
}

// out[i] = f(a[i % na], b[i % nb]); the backward pass reduces over the batch.
template <class F, class DA, class DB>
Var binary(const char* op, const Var& a, const Var& b, F f, DA dfa, DB dfb) {
    same_graph(op, a, b);
    Graph& g = a.graph();
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(broadcast_shape(op, av.shape(), bv.shape()));
    const std::size_t n = out.size(), na = av.size(), nb = bv.size();
    if (na == n && nb == n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
    }
    const NodeId ia = a.id(), ib = b.id();
    return g.record(std::move(out), {ia, ib},
                    [ia, ib, dfa, dfb](Graph& gr, NodeId self) {
                        const Tensor& go = gr.grad_of(self);
                        const Tensor& x = gr.value(ia);
                        const Tensor& y = gr.value(ib);
                        const std::size_t n = go.size(), na = x.size(), nb = y.size();
                        if (gr.requires_grad(ia)) {
                            Tensor& ga = gr.grad_slot(ia);
                            for (std::size_t i = 0; i < n; ++i) ga[i % na] += go[i] * dfa(x[i % na], y[i % nb]);
                        }
                        if (gr.requires_grad(ib)) {
                            Tensor& gb = gr.grad_slot(ib);
                            for (std::size_t i = 0; i < n; ++i) gb[i % nb] += go[i] * dfb(x[i % na], y[i % nb]);
                        }
                    },
                    op);
}

// Elementwise unary op; `df(x, y)` is the derivative given input x and output y.
template <class F, class DF>
Var unary(const char* op, const Var& a, F f, DF df) {
    Graph& g = a.graph();
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    const NodeId ia = a.id();
    return g.record(std::move(out), {ia},
                    [ia, df](Graph& gr, NodeId self) {
                        const Tensor& go = gr.grad_of(self);
                        const Tensor& x = gr.value(ia);
                        const Tensor& y = gr.value(self);
                        Tensor& ga = gr.grad_slot(ia);
                        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * df(x[i], y[i]);
                    },
                    op);
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double silu_d1(double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 + x * (1.0 - s));
}

double silu_d2(double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 operand, got " + shape_str(t.shape()));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    same_graph("matmul", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_fail("matmul", av.shape(), bv.shape());
    Tensor out(Shape{av.dim(0), bv.dim(1)});
    as_mat(out).noalias() = as_mat(av) * as_mat(bv);
    const NodeId ia = a.id(), ib = b.id();
    return a.graph().record(std::move(out), {ia, ib},
                            [ia, ib](Graph& g, NodeId self) {
                                auto go = as_mat(g.grad_of(self));
                                if (g.requires_grad(ia)) {
                                    as_mat(g.grad_slot(ia)).noalias() += go * as_mat(g.value(ib)).transpose();
                                }
                                if (g.requires_grad(ib)) {
                                    as_mat(g.grad_slot(ib)).noalias() += as_mat(g.value(ia)).transpose() * go;
                                }
                            },
                            "matmul");
}

Var add(const Var& a, const Var& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Var scale(const Var& a, double s) {
    return unary(
        "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
    return unary(
        "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    Graph& g = parts[0].graph();
    const std::size_t rows = parts[0].value().rank() == 2 ? parts[0].value().dim(0) : 0;
    std::size_t width = 0;
    std::vector<NodeId> ids;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
        same_graph("concat", parts[0], p);
        const Tensor& v = p.value();
        if (v.rank() != 2 || v.dim(0) != rows) shape_fail("concat", parts[0].shape(), v.shape());
        ids.push_back(p.id());
        offsets.push_back(width);
        width += v.dim(1);
    }
    Tensor out(Shape{rows, width});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        as_mat(out).middleCols(offsets[k], v.dim(1)) = as_mat(v);
    }
    return g.record(std::move(out), ids,
                    [ids, offsets](Graph& gr, NodeId self) {
                        auto go = as_mat(gr.grad_of(self));
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (!gr.requires_grad(ids[k])) continue;
                            Tensor& gk = gr.grad_slot(ids[k]);
                            as_mat(gk) += go.middleCols(offsets[k], gk.dim(1));
                        }
                    },
                    "concat");
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
    const Tensor& av = a.value();
    require_rank2("slice_cols", av);
    if (begin > end || end > av.dim(1)) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for " + shape_str(av.shape()));
    }
    Tensor out(Shape{av.dim(0), end - begin});
    as_mat(out) = as_mat(av).middleCols(begin, end - begin);
    const NodeId ia = a.id();
    return a.graph().record(std::move(out), {ia},
                            [ia, begin](Graph& g, NodeId self) {
                                const Tensor& go = g.grad_of(self);
                                as_mat(g.grad_slot(ia)).middleCols(begin, go.dim(1)) += as_mat(go);
                            },
                            "slice_cols");
}

std::vector<Var> split_cols(const Var& a, std::span<const std::size_t> widths) {
    std::size_t total = 0;
    for (auto w : widths) total += w;
    require_rank2("split_cols", a.value());
    if (total != a.value().dim(1)) {
        throw ShapeError("split_cols: widths sum to " + std::to_string(total) + " but operand is " +
                         shape_str(a.shape()));
    }
    std::vector<Var> out;
    std::size_t off = 0;
    for (auto w : widths) {
        out.push_back(slice_cols(a, off, off + w));
        off += w;
    }
    return out;
}

Var sum(const Var& a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double x : av.data()) s += x;
    const NodeId ia = a.id();
    return a.graph().record(Tensor::scalar(s), {ia},
                            [ia](Graph& g, NodeId self) {
                                const double go = g.grad_of(self)[0];
                                for (double& x : g.grad_slot(ia).storage()) x += go;
                            },
                            "sum");
}

Var mean(const Var& a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ShapeError("mean: empty operand");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sq_norm(const Var& a) { return sum(square(a)); }

Var exp(const Var& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(const Var& a) {
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
    return unary(
        "sigmoid", a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var silu(const Var& a) {
    return unary(
        "silu", a, [](double x) { return x * sigmoid_scalar(x); }, [](double x, double) { return silu_d1(x); });
}

Var silu_grad(const Var& a) {
    return unary(
        "silu_grad", a, silu_d1, [](double x, double) { return silu_d2(x); });
}

Var sin(const Var& a) {
    return unary(
        "sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
    return unary(
        "cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var square(const Var& a) {
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    return unary(
        "clamp", a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

}  // namespace svfm
