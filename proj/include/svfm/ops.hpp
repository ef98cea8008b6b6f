#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svfm/graph.hpp"

namespace svfm {

// Traced primitives. Every op checks shapes (ShapeError naming the op and
// both shapes) and rejects non-finite results (NumericError).
//
// Binary elementwise ops broadcast only along the leading batch axis: an
// operand may have shape S, [1, ...S[1:]] or S[1:] against a full shape S.

Var matmul(const Var& a, const Var& b);  // [n,k] x [k,m] -> [n,m]
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var concat(std::span<const Var> parts);  // along axis 1, rank-2 operands
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
std::vector<Var> split_cols(const Var& a, std::span<const std::size_t> widths);

Var sum(const Var& a);   // -> scalar
Var mean(const Var& a);  // -> scalar
Var sq_norm(const Var& a);  // sum of squares -> scalar

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var silu_grad(const Var& a);  // d silu / dx, itself differentiable
Var sin(const Var& a);
Var cos(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator-(const Var& a) { return neg(a); }

}  // namespace svfm
