#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "svfm/data.hpp"
#include "svfm/nn.hpp"

namespace svfm {

struct LossWeights {
    double alpha = 10.0;  // straightness weight
    double beta = 1e-2;   // KL weight

    void validate() const;
};

// Traced callables so the objectives work for the MLPs and for hand-written
// analytic fields alike. An empty posterior means "no latent".
using TracedVelocity = std::function<Dual(Graph&, const Dual& x, const Dual& t, const std::optional<Dual>& z)>;
using TracedPosterior =
    std::function<std::pair<Dual, Dual>(Graph&, const Dual& x0, const Dual& x1, const Dual& xt, const Dual& t)>;

TracedVelocity traced(VelocityField& field);
TracedPosterior traced(PosteriorEncoder& encoder);
TracedVelocity traced_frozen(const VelocityField& field);
TracedPosterior traced_frozen(const PosteriorEncoder& encoder);

// Batch mean of the squared L2 row norm of (v_pred - delta).
Var fm_loss(const Var& v_pred, const Var& delta);

// Batch mean of KL(N(mu, sigma^2) || N(0, I)), summed over latent dims.
Var kl_loss(const Var& mu, const Var& log_sigma);

struct VfmResult {
    Var loss;     // fm_term + beta * kl_term
    Var fm_term;
    Var kl_term;  // zero constant when there is no posterior
    std::optional<PosteriorOutput> posterior;
};

VfmResult vfm_loss(Graph& g, const TracedVelocity& velocity, const TracedPosterior& posterior,
                   const CouplingBatch& batch, const Tensor& eps, double beta);

/// Components of the material derivative of v along the interpolant, with the
/// conditional velocity delta standing in for dX_t/dt.
struct StraightnessTerms {
    Tensor dv_dx_dot_delta;  // filled only with breakdown
    Tensor dv_dt;            // filled only with breakdown
    Tensor dv_dz_dot_dzdt;   // filled only with breakdown
    Tensor residual;         // full D_t v, [n, d]
    double value = 0.0;      // mean squared row norm of residual
};

struct StraightnessResult {
    Var loss;
    StraightnessTerms terms;
};

/// One JVP through (xt, t) -> v(xt, t, z(x0, x1, xt, t)) with tangent (delta, 1);
/// x0, x1 and eps carry zero tangent. The loss stays differentiable in the
/// parameters of both networks.
StraightnessResult straightness_loss(Graph& g, const TracedVelocity& velocity, const TracedPosterior& posterior,
                                     const CouplingBatch& batch, const Tensor& eps, bool breakdown = false);

struct TotalLossResult {
    Var total;
    Var vfm;
    Var fm_term;
    Var kl_term;
    std::optional<Var> straightness;  // present when alpha > 0
    std::optional<PosteriorOutput> posterior;
};

/// vfm + alpha * straightness, both terms sharing one posterior draw (same eps).
TotalLossResult total_loss(Graph& g, const TracedVelocity& velocity, const TracedPosterior& posterior,
                           const CouplingBatch& batch, const Tensor& eps, const LossWeights& weights);

}  // namespace svfm
