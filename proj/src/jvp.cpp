#include "svfm/jvp.hpp"

#include <string>

#include "svfm/errors.hpp"

namespace svfm {

namespace {

std::optional<Var> add_opt(const std::optional<Var>& a, const std::optional<Var>& b) {
    if (a && b) return add(*a, *b);
    return a ? a : b;
}

// Tangent of an elementwise op: t * f'(x), where f'(x) is itself traced.
Dual chain(Var primal, const Dual& a, const std::function<Var()>& derivative) {
    if (!a.has_tangent()) return Dual(primal);
    return Dual(primal, mul(*a.tangent, derivative()));
}

}  // namespace

Dual::Dual(Var p, Var t) : primal(p), tangent(t) {
    if (p.shape() != t.shape()) {
        throw ShapeError("Dual: tangent shape " + shape_str(t.shape()) + " does not match primal " +
                         shape_str(p.shape()));
    }
}

Var Dual::tangent_or_zero() const {
    if (tangent) return *tangent;
    return primal.graph().constant(Tensor::zeros_like(primal.value()));
}

Dual matmul(const Dual& a, const Dual& b) {
    Var p = matmul(a.primal, b.primal);
    std::optional<Var> ta, tb;
    if (a.tangent) ta = matmul(*a.tangent, b.primal);
    if (b.tangent) tb = matmul(a.primal, *b.tangent);
    return Dual(p, add_opt(ta, tb));
}

// For broadcasting ops the tangent of the smaller operand must be broadcast too;
// add/sub do that through the primitive itself.
Dual add(const Dual& a, const Dual& b) {
    Var p = add(a.primal, b.primal);
    if (!a.tangent && !b.tangent) return Dual(p);
    if (a.tangent && b.tangent) return Dual(p, add(*a.tangent, *b.tangent));
    Var t = a.tangent ? *a.tangent : *b.tangent;
    if (t.shape() != p.shape()) t = add(t, p.graph().constant(Tensor::zeros_like(p.value())));
    return Dual(p, t);
}

Dual sub(const Dual& a, const Dual& b) {
    Var p = sub(a.primal, b.primal);
    if (!a.tangent && !b.tangent) return Dual(p);
    Var t = a.tangent && b.tangent ? sub(*a.tangent, *b.tangent)
            : a.tangent            ? *a.tangent
                                   : neg(*b.tangent);
    if (t.shape() != p.shape()) t = add(t, p.graph().constant(Tensor::zeros_like(p.value())));
    return Dual(p, t);
}

Dual mul(const Dual& a, const Dual& b) {
    Var p = mul(a.primal, b.primal);
    std::optional<Var> ta, tb;
    if (a.tangent) ta = mul(*a.tangent, b.primal);
    if (b.tangent) tb = mul(a.primal, *b.tangent);
    return Dual(p, add_opt(ta, tb));
}

Dual div(const Dual& a, const Dual& b) {
    Var p = div(a.primal, b.primal);
    std::optional<Var> ta, tb;
    if (a.tangent) ta = div(*a.tangent, b.primal);
    if (b.tangent) tb = neg(div(mul(p, *b.tangent), b.primal));
    return Dual(p, add_opt(ta, tb));
}

Dual scale(const Dual& a, double s) {
    Var p = scale(a.primal, s);
    if (!a.tangent) return Dual(p);
    return Dual(p, scale(*a.tangent, s));
}

Dual add_scalar(const Dual& a, double s) { return Dual(add_scalar(a.primal, s), a.tangent); }

Dual concat(std::span<const Dual> parts) {
    std::vector<Var> primals;
    bool any_tangent = false;
    for (const auto& d : parts) {
        primals.push_back(d.primal);
        any_tangent = any_tangent || d.has_tangent();
    }
    Var p = concat(primals);
    if (!any_tangent) return Dual(p);
    std::vector<Var> tangents;
    for (const auto& d : parts) tangents.push_back(d.tangent_or_zero());
    return Dual(p, concat(tangents));
}

Dual slice_cols(const Dual& a, std::size_t begin, std::size_t end) {
    Var p = slice_cols(a.primal, begin, end);
    if (!a.tangent) return Dual(p);
    return Dual(p, slice_cols(*a.tangent, begin, end));
}

Dual sum(const Dual& a) {
    Var p = sum(a.primal);
    if (!a.tangent) return Dual(p);
    return Dual(p, sum(*a.tangent));
}

Dual exp(const Dual& a) {
    Var p = exp(a.primal);
    return chain(p, a, [&] { return p; });
}

Dual log(const Dual& a) {
    Var p = log(a.primal);
    if (!a.tangent) return Dual(p);
    return Dual(p, div(*a.tangent, a.primal));
}

Dual tanh(const Dual& a) {
    Var p = tanh(a.primal);
    return chain(p, a, [&] { return add_scalar(neg(square(p)), 1.0); });
}

Dual silu(const Dual& a) {
    Var p = silu(a.primal);
    return chain(p, a, [&] { return silu_grad(a.primal); });
}

Dual sin(const Dual& a) {
    Var p = sin(a.primal);
    return chain(p, a, [&] { return cos(a.primal); });
}

Dual cos(const Dual& a) {
    Var p = cos(a.primal);
    return chain(p, a, [&] { return neg(sin(a.primal)); });
}

Dual square(const Dual& a) {
    Var p = square(a.primal);
    return chain(p, a, [&] { return scale(a.primal, 2.0); });
}

Dual clamp(const Dual& a, double lo, double hi) {
    Var p = clamp(a.primal, lo, hi);
    if (!a.tangent) return Dual(p);
    const Tensor& x = a.primal.value();
    Tensor mask(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) mask[i] = (x[i] >= lo && x[i] <= hi) ? 1.0 : 0.0;
    return Dual(p, mul(*a.tangent, p.graph().constant(std::move(mask))));
}

JvpResult jvp(const TracedFn& f, std::span<const Var> primals, std::span<const Var> tangents) {
    if (primals.size() != tangents.size()) {
        throw ShapeError("jvp: " + std::to_string(primals.size()) + " primals but " +
                         std::to_string(tangents.size()) + " tangents");
    }
    std::vector<Dual> args;
    args.reserve(primals.size());
    for (std::size_t i = 0; i < primals.size(); ++i) {
        if (primals[i].shape() != tangents[i].shape()) {
            throw ShapeError("jvp: tangent " + std::to_string(i) + " has shape " + shape_str(tangents[i].shape()) +
                             " but primal has " + shape_str(primals[i].shape()));
        }
        args.emplace_back(primals[i], tangents[i]);
    }
    Dual out = f(args);
    return JvpResult{out.primal, out.tangent_or_zero()};
}

}  // namespace svfm
