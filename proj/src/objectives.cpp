#include "svfm/objectives.hpp"

#include <cmath>

#include "svfm/errors.hpp"

namespace svfm {

void LossWeights::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("loss weights: alpha must be >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("loss weights: beta must be >= 0");
}

TracedVelocity traced(VelocityField& field) {
    return [&field](Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>& z) {
        return field.forward(g, x, t, z);
    };
}

TracedPosterior traced(PosteriorEncoder& encoder) {
    return [&encoder](Graph& g, const Dual& x0, const Dual& x1, const Dual& xt, const Dual& t) {
        return encoder.forward(g, x0, x1, xt, t);
    };
}

TracedVelocity traced_frozen(const VelocityField& field) {
    return [&field](Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>& z) {
        return field.forward_frozen(g, x, t, z);
    };
}

TracedPosterior traced_frozen(const PosteriorEncoder& encoder) {
    return [&encoder](Graph& g, const Dual& x0, const Dual& x1, const Dual& xt, const Dual& t) {
        return encoder.forward_frozen(g, x0, x1, xt, t);
    };
}

Var fm_loss(const Var& v_pred, const Var& delta) {
    if (v_pred.shape() != delta.shape()) {
        throw ShapeError("fm_loss: v_pred " + shape_str(v_pred.shape()) + " vs delta " + shape_str(delta.shape()));
    }
    const double n = static_cast<double>(v_pred.value().rows());
    return scale(sq_norm(sub(v_pred, delta)), 1.0 / n);
}

Var kl_loss(const Var& mu, const Var& log_sigma) {
    if (mu.shape() != log_sigma.shape()) {
        throw ShapeError("kl_loss: mu " + shape_str(mu.shape()) + " vs log_sigma " + shape_str(log_sigma.shape()));
    }
    const double n = static_cast<double>(mu.value().rows());
    // 0.5 * (mu^2 + sigma^2 - 1 - 2 log sigma)
    Var per = add_scalar(sub(add(square(mu), exp(scale(log_sigma, 2.0))), scale(log_sigma, 2.0)), -1.0);
    return scale(sum(per), 0.5 / n);
}

namespace {

struct Pass {
    Dual v;
    std::optional<Dual> mu;
    std::optional<Dual> log_sigma;
    std::optional<Dual> z;
    Var delta;
};

// Shared forward pass. With `with_tangent`, xt carries tangent delta and t
// carries tangent 1, so v.tangent is the material derivative along the line.
Pass run_pass(Graph& g, const TracedVelocity& velocity, const TracedPosterior& posterior, const CouplingBatch& batch,
              const Tensor& eps, bool with_tangent) {
    const std::size_t n = batch.size();
    Pass p;
    p.delta = g.constant(batch.delta);
    Var xt = g.constant(batch.xt);
    Var t = g.constant(batch.t);
    Dual xt_d = with_tangent ? Dual(xt, p.delta) : Dual(xt);
    Dual t_d = with_tangent ? Dual(t, g.constant(Tensor(Shape{n, 1}, 1.0))) : Dual(t);
    if (posterior) {
        if (eps.rank() != 2 || eps.rows() != n) {
            throw ShapeError("objective: eps has shape " + shape_str(eps.shape()) + " for batch of " + std::to_string(n));
        }
        auto [mu, log_sigma] = posterior(g, Dual(g.constant(batch.x0)), Dual(g.constant(batch.x1)), xt_d, t_d);
        p.z = reparameterize(mu, log_sigma, g.constant(eps));
        p.mu = mu;
        p.log_sigma = log_sigma;
    }
    p.v = velocity(g, xt_d, t_d, p.z);
    return p;
}

PosteriorOutput posterior_output(const Pass& p, const Tensor& eps) {
    return PosteriorOutput{p.mu->primal.value(), p.log_sigma->primal.value(), p.z->primal.value(), eps};
}

Var mean_row_sq_norm(const Var& a) { return scale(sq_norm(a), 1.0 / static_cast<double>(a.value().rows())); }

}  // namespace

VfmResult vfm_loss(Graph& g, const TracedVelocity& velocity, const TracedPosterior& posterior,
                   const CouplingBatch& batch, const Tensor& eps, double beta) {
    if (!(beta >= 0.0)) throw ConfigError("vfm_loss: beta must be >= 0");
    Pass p = run_pass(g, velocity, posterior, batch, eps, false);
    VfmResult r;
    r.fm_term = fm_loss(p.v.primal, p.delta);
    if (posterior) {
        r.kl_term = kl_loss(p.mu->primal, p.log_sigma->primal);
        r.loss = add(r.fm_term, scale(r.kl_term, beta));
        r.posterior = posterior_output(p, eps);
    } else {
        r.kl_term = g.constant(Tensor::scalar(0.0));
        r.loss = r.fm_term;
    }
    return r;
}

StraightnessResult straightness_loss(Graph& g, const TracedVelocity& velocity, const TracedPosterior& posterior,
                                     const CouplingBatch& batch, const Tensor& eps, bool breakdown) {
    Pass p = run_pass(g, velocity, posterior, batch, eps, true);
    StraightnessResult r;
    Var residual = p.v.tangent_or_zero();
    r.loss = mean_row_sq_norm(residual);
    r.terms.residual = residual.value();
    r.terms.value = r.loss.item();
    if (!breakdown) return r;

    // Split the same derivative into its three chain-rule paths, holding z at
    // the value used above wherever its own variation is excluded.
    const std::size_t n = batch.size();
    Var xt = g.constant(batch.xt);
    Var t = g.constant(batch.t);
    Var ones = g.constant(Tensor(Shape{n, 1}, 1.0));
    std::optional<Dual> z_fixed;
    if (p.z) z_fixed = Dual(g.constant(p.z->primal.value()));
    r.terms.dv_dx_dot_delta = velocity(g, Dual(xt, p.delta), Dual(t), z_fixed).tangent_or_zero().value();
    r.terms.dv_dt = velocity(g, Dual(xt), Dual(t, ones), z_fixed).tangent_or_zero().value();
    if (p.z) {
        Var dz_dt = g.constant(p.z->tangent_or_zero().value());
        Dual z_moving(g.constant(p.z->primal.value()), dz_dt);
        r.terms.dv_dz_dot_dzdt = velocity(g, Dual(xt), Dual(t), z_moving).tangent_or_zero().value();
    } else {
        r.terms.dv_dz_dot_dzdt = Tensor::zeros_like(r.terms.residual);
    }
    return r;
}

TotalLossResult total_loss(Graph& g, const TracedVelocity& velocity, const TracedPosterior& posterior,
                           const CouplingBatch& batch, const Tensor& eps, const LossWeights& weights) {
    weights.validate();
    const bool straight = weights.alpha > 0.0;
    Pass p = run_pass(g, velocity, posterior, batch, eps, straight);
    TotalLossResult r;
    r.fm_term = fm_loss(p.v.primal, p.delta);
    if (posterior) {
        r.kl_term = kl_loss(p.mu->primal, p.log_sigma->primal);
        r.vfm = add(r.fm_term, scale(r.kl_term, weights.beta));
        r.posterior = posterior_output(p, eps);
    } else {
        r.kl_term = g.constant(Tensor::scalar(0.0));
        r.vfm = r.fm_term;
    }
    if (straight) {
        r.straightness = mean_row_sq_norm(p.v.tangent_or_zero());
        r.total = add(r.vfm, scale(*r.straightness, weights.alpha));
    } else {
        r.total = r.vfm;
    }
    return r;
}

}  // namespace svfm
