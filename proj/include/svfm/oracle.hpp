#pragma once

#include <string>
#include <vector>

#include "svfm/dynamics.hpp"
#include "svfm/energy.hpp"
#include "svfm/gmm.hpp"
#include "svfm/objectives.hpp"

namespace svfm {

/// Marginal velocity E[X1 - X0 | X_t = x] for a N(0, I) source and an
/// isotropic mixture target, evaluated row-wise on x: [n, d]. Requires t < 1.
Tensor analytic_velocity_gmm(const GmmSpec& spec, const Tensor& x, double t);

// The closed-form field as an integrable callable (z ignored).
VelocityFn gmm_velocity_fn(const GmmSpec& spec);

/// Binned estimate of the non-intersection functional: for each t, interpolant
/// positions are hashed into axis-aligned cells of side h (grid anchored at
/// the per-coordinate minimum), the within-cell spread of delta is summed and
/// divided by n; the result is averaged over t_grid.
double estimate_v_functional(const Tensor& x0, const Tensor& x1, const std::vector<double>& t_grid, double h);
// `pairs` is [n, 2d]: source coordinates then target coordinates.
double estimate_v_functional(const Tensor& pairs, const std::vector<double>& t_grid, double h);

// Interior grid {1/(k+1), ..., k/(k+1)}.
std::vector<double> interior_grid(std::size_t k);

struct TransportCost {
    double cost_x = 0.0;  // E|X1 - X0|^2, independent coupling
    double cost_z = 0.0;  // E|Z1 - Z0|^2, Z0 = X0 pushed by the analytic flow
    double se = 0.0;      // standard error of cost_x - cost_z (paired)
    bool holds(double k = 3.0) const { return cost_z <= cost_x + k * se; }
};

TransportCost check_transport_cost(const GmmSpec& spec, std::size_t n, const StepSchedule& schedule, Rng& rng);

/// Energy distance between Law(X_t) (direct interpolation of fresh pairs) and
/// Law(Z_t) (analytic flow from Z0 = X0) at each probe time. Probe times must
/// be knots of `schedule`. For d > 1 each set is capped at `max_points_nd`.
std::vector<double> check_marginal_preservation(const GmmSpec& spec, std::size_t n,
                                                const std::vector<double>& probes, const StepSchedule& schedule,
                                                Rng& rng, std::size_t max_points_nd = 3000);

/// |D_t v| = |dv/dt + (grad_x v) v| at every recorded state, computed with one
/// JVP per knot (tangent (v, 1), z held fixed). Result is [N + 1, n].
Tensor material_derivative_norm(const TracedVelocity& velocity, const Trajectory& trajectory);

struct DiagnosticsReport {
    double v_estimate = 0.0;
    double cost_x = 0.0;
    double cost_z = 0.0;
    std::vector<double> marginal_distances;
    double material_derivative_max = 0.0;
    double material_derivative_mean = 0.0;
};

// ---------------------------------------------------------------------------
// Check suites: marginal, cost, material, v-functional.

struct CheckRow {
    std::string suite;
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool passed = false;
};

struct SuiteOptions {
    std::size_t n = 100000;
    std::uint64_t seed = 0;
    double tolerance_scale = 1.0;
    std::size_t steps = 1000;
};

const std::vector<std::string>& oracle_suite_names();  // includes "all"

/// Runs a named suite. Statistical thresholds are pinned at n = 1e5 and
/// widen by tolerance_scale * sqrt(1e5 / n) for smaller n.
std::vector<CheckRow> run_oracle_suite(const std::string& suite, const SuiteOptions& options);

}  // namespace svfm
