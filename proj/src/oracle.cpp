#include "svfm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "svfm/errors.hpp"

namespace svfm {

Tensor analytic_velocity_gmm(const GmmSpec& spec, const Tensor& x, double t) {
    if (!(t < 1.0)) throw std::invalid_argument("analytic_velocity_gmm: requires t < 1");
    if (!(t >= 0.0)) throw std::invalid_argument("analytic_velocity_gmm: requires t >= 0");
    const std::size_t n = x.rows(), d = x.cols(), k_count = spec.components();
    if (d != spec.dim()) throw ShapeError("analytic_velocity_gmm: x has " + std::to_string(d) + " columns, mixture is " +
                                          std::to_string(spec.dim()) + "-D");
    const double one_minus = 1.0 - t;
    std::vector<double> var(k_count), log_prior(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        var[k] = t * t * spec.stds[k] * spec.stds[k] + one_minus * one_minus;
        log_prior[k] = spec.weights[k] > 0.0
                           ? std::log(spec.weights[k]) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * var[k])
                           : -std::numeric_limits<double>::infinity();
    }
    Tensor v(Shape{n, d});
    std::vector<double> logr(k_count);
    for (std::size_t i = 0; i < n; ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_count; ++k) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = x(i, j) - t * spec.means(k, j);
                sq += diff * diff;
            }
            logr[k] = log_prior[k] - 0.5 * sq / var[k];
            top = std::max(top, logr[k]);
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            logr[k] = std::exp(logr[k] - top);
            norm += logr[k];
        }
        for (std::size_t j = 0; j < d; ++j) {
            double cond_mean = 0.0;
            for (std::size_t k = 0; k < k_count; ++k) {
                if (logr[k] == 0.0) continue;
                const double s2 = spec.stds[k] * spec.stds[k];
                const double mu = (spec.means(k, j) * one_minus * one_minus + t * s2 * x(i, j)) / var[k];
                cond_mean += logr[k] * mu;
            }
            v(i, j) = (cond_mean / norm - x(i, j)) / one_minus;
        }
    }
    return v;
}

VelocityFn gmm_velocity_fn(const GmmSpec& spec) {
    return [spec](const Tensor& x, double t, const Tensor&) { return analytic_velocity_gmm(spec, x, t); };
}

std::vector<double> interior_grid(std::size_t k) {
    std::vector<double> g(k);
    for (std::size_t i = 0; i < k; ++i) g[i] = static_cast<double>(i + 1) / static_cast<double>(k + 1);
    return g;
}

double estimate_v_functional(const Tensor& x0, const Tensor& x1, const std::vector<double>& t_grid, double h) {
    if (x0.shape() != x1.shape() || x0.rank() != 2) {
        throw ShapeError("estimate_v_functional: x0 " + shape_str(x0.shape()) + " vs x1 " + shape_str(x1.shape()));
    }
    const std::size_t n = x0.rows(), d = x0.cols();
    if (n == 0) throw std::invalid_argument("estimate_v_functional: no pairs");
    if (!(h > 0.0)) throw std::invalid_argument("estimate_v_functional: bin width must be > 0");
    if (t_grid.empty()) throw std::invalid_argument("estimate_v_functional: empty t grid");

    std::vector<double> xt(n * d);
    std::vector<std::int64_t> cell(n * d);
    std::vector<std::size_t> order(n);
    double total = 0.0;
    for (double t : t_grid) {
        std::vector<double> lo(d, std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double p = (1.0 - t) * x0(i, j) + t * x1(i, j);
                xt[i * d + j] = p;
                lo[j] = std::min(lo[j], p);
            }
        for (std::size_t i = 0; i < n * d; ++i) cell[i] = static_cast<std::int64_t>(std::floor((xt[i] - lo[i % d]) / h));
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::lexicographical_compare(cell.begin() + a * d, cell.begin() + (a + 1) * d, cell.begin() + b * d,
                                                cell.begin() + (b + 1) * d) ||
                   (std::equal(cell.begin() + a * d, cell.begin() + (a + 1) * d, cell.begin() + b * d) && a < b);
        });
        double spread = 0.0;
        std::vector<double> mean(d);
        for (std::size_t begin = 0; begin < n;) {
            std::size_t end = begin + 1;
            const auto key = cell.begin() + order[begin] * d;
            while (end < n && std::equal(key, key + d, cell.begin() + order[end] * d)) ++end;
            if (end - begin > 1) {
                std::fill(mean.begin(), mean.end(), 0.0);
                for (std::size_t r = begin; r < end; ++r)
                    for (std::size_t j = 0; j < d; ++j) mean[j] += x1(order[r], j) - x0(order[r], j);
                for (double& m : mean) m /= static_cast<double>(end - begin);
                for (std::size_t r = begin; r < end; ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dev = x1(order[r], j) - x0(order[r], j) - mean[j];
                        spread += dev * dev;
                    }
            }
            begin = end;
        }
        total += spread / static_cast<double>(n);
    }
    return total / static_cast<double>(t_grid.size());
}

double estimate_v_functional(const Tensor& pairs, const std::vector<double>& t_grid, double h) {
    if (pairs.rank() != 2 || pairs.cols() % 2 != 0) {
        throw ShapeError("estimate_v_functional: pairs must be [n x 2d], got " + shape_str(pairs.shape()));
    }
    const std::size_t n = pairs.rows(), d = pairs.cols() / 2;
    Tensor x0(Shape{n, d}), x1(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            x0(i, j) = pairs(i, j);
            x1(i, j) = pairs(i, d + j);
        }
    return estimate_v_functional(x0, x1, t_grid, h);
}

TransportCost check_transport_cost(const GmmSpec& spec, std::size_t n, const StepSchedule& schedule, Rng& rng) {
    spec.validate();
    if (n < 2) throw std::invalid_argument("check_transport_cost: n must be >= 2");
    const std::size_t d = spec.dim();
    Tensor x0 = rng.normal_tensor(Shape{n, d});
    Tensor x1 = spec.sample(n, rng);
    Tensor z1 = integrate_observed(gmm_velocity_fn(spec), x0, Tensor(Shape{n, 0}), schedule, nullptr);
    double sum_x = 0.0, sum_z = 0.0, sum_diff = 0.0, sum_diff2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double cx = 0.0, cz = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            cx += (x1(i, j) - x0(i, j)) * (x1(i, j) - x0(i, j));
            cz += (z1(i, j) - x0(i, j)) * (z1(i, j) - x0(i, j));
        }
        sum_x += cx;
        sum_z += cz;
        sum_diff += cx - cz;
        sum_diff2 += (cx - cz) * (cx - cz);
    }
    const double nd = static_cast<double>(n);
    TransportCost r;
    r.cost_x = sum_x / nd;
    r.cost_z = sum_z / nd;
    const double mean_diff = sum_diff / nd;
    const double var_diff = std::max(0.0, (sum_diff2 - nd * mean_diff * mean_diff) / (nd - 1.0));
    r.se = std::sqrt(var_diff / nd);
    return r;
}

namespace {

std::size_t knot_index(const StepSchedule& schedule, double t) {
    const auto& k = schedule.knots();
    for (std::size_t i = 0; i < k.size(); ++i)
        if (std::abs(k[i] - t) < 1e-12) return i;
    throw std::invalid_argument("probe time " + std::to_string(t) + " is not a schedule knot");
}

Tensor head_rows(const Tensor& t, std::size_t m) {
    if (t.rows() <= m) return t;
    const std::size_t d = t.cols();
    return Tensor(Shape{m, d}, std::vector<double>(t.data().begin(), t.data().begin() + m * d));
}

}  // namespace

std::vector<double> check_marginal_preservation(const GmmSpec& spec, std::size_t n,
                                                const std::vector<double>& probes, const StepSchedule& schedule,
                                                Rng& rng, std::size_t max_points_nd) {
    spec.validate();
    const std::size_t d = spec.dim();
    std::vector<std::size_t> probe_knots;
    for (double t : probes) probe_knots.push_back(knot_index(schedule, t));

    // Law(X_t): fresh independent pairs, interpolated directly.
    Tensor a0 = rng.normal_tensor(Shape{n, d});
    Tensor a1 = spec.sample(n, rng);
    // Law(Z_t): an independent source draw pushed by the analytic flow.
    Tensor z0 = rng.normal_tensor(Shape{n, d});

    std::vector<Tensor> z_at(probes.size());
    integrate_observed(
        gmm_velocity_fn(spec), z0, Tensor(Shape{n, 0}), schedule,
        [&](std::size_t idx, double, const Tensor& x) {
            for (std::size_t p = 0; p < probe_knots.size(); ++p)
                if (probe_knots[p] == idx) z_at[p] = x;
        });

    const std::size_t cap = d == 1 ? n : std::min(n, max_points_nd);
    std::vector<double> out;
    for (std::size_t p = 0; p < probes.size(); ++p) {
        const double t = probes[p];
        Tensor xt(Shape{n, d});
        for (std::size_t i = 0; i < n * d; ++i) xt[i] = (1.0 - t) * a0[i] + t * a1[i];
        out.push_back(energy_distance(head_rows(xt, cap), head_rows(z_at[p], cap)));
    }
    return out;
}

Tensor material_derivative_norm(const TracedVelocity& velocity, const Trajectory& trajectory) {
    const std::size_t steps = trajectory.states.size(), n = trajectory.count();
    Tensor out(Shape{steps, n});
    for (std::size_t k = 0; k < steps; ++k) {
        Graph g;
        const Tensor& x = trajectory.states[k];
        Var xv = g.constant(x);
        Var tv = g.constant(Tensor(Shape{n, 1}, trajectory.times[k]));
        std::optional<Dual> z;
        if (trajectory.latent.rank() == 2 && trajectory.latent.cols() > 0) z = Dual(g.constant(trajectory.latent));
        // dx/dt along the characteristic is v itself.
        Tensor v = velocity(g, Dual(xv), Dual(tv), z).primal.value();
        Dual out_d = velocity(g, Dual(xv, g.constant(v)), Dual(tv, g.constant(Tensor(Shape{n, 1}, 1.0))), z);
        const Tensor dv = out_d.tangent_or_zero().value();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < dv.cols(); ++j) s += dv(i, j) * dv(i, j);
            out(k, i) = std::sqrt(s);
        }
    }
    return out;
}

}  // namespace svfm
