#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "svfm/ops.hpp"

namespace svfm {

/// A traced primal paired with an optional traced tangent. A missing tangent
/// means the tangent is identically zero.
///
/// Tangent rules are written with the same traced primitives as the primal,
/// so the tangent stays on the tape and a later backward pass through any
/// function of it reaches the parameters (forward-over-reverse).
struct Dual {
    Var primal;
    std::optional<Var> tangent;

    Dual() = default;
    Dual(Var p) : primal(p) {}  // NOLINT: implicit lift of constants
    Dual(Var p, Var t);
    Dual(Var p, std::optional<Var> t) : primal(p), tangent(t) {}

    bool has_tangent() const { return tangent.has_value(); }
    Graph& graph() const { return primal.graph(); }
    const Shape& shape() const { return primal.shape(); }
    // Materialized tangent; zeros when absent.
    Var tangent_or_zero() const;
};

Dual matmul(const Dual& a, const Dual& b);
Dual add(const Dual& a, const Dual& b);
Dual sub(const Dual& a, const Dual& b);
Dual mul(const Dual& a, const Dual& b);
Dual div(const Dual& a, const Dual& b);
Dual scale(const Dual& a, double s);
Dual add_scalar(const Dual& a, double s);
Dual concat(std::span<const Dual> parts);
Dual slice_cols(const Dual& a, std::size_t begin, std::size_t end);
Dual sum(const Dual& a);
Dual exp(const Dual& a);
Dual log(const Dual& a);
Dual tanh(const Dual& a);
Dual silu(const Dual& a);
Dual sin(const Dual& a);
Dual cos(const Dual& a);
Dual square(const Dual& a);
Dual clamp(const Dual& a, double lo, double hi);

using TracedFn = std::function<Dual(std::span<const Dual>)>;

struct JvpResult {
    Var value;
    Var tangent;
};

/// Evaluates f at `primals` and pushes `tangents` through it in the same tape
/// pass. Both returned handles remain differentiable.
JvpResult jvp(const TracedFn& f, std::span<const Var> primals, std::span<const Var> tangents);

}  // namespace svfm
