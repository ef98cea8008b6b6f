#include "svfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "svfm/errors.hpp"
#include "svfm/oracle.hpp"

namespace svfm {

double straightness_ratio(const Tensor& path, bool* degenerate) {
    if (path.rank() != 2 || path.rows() < 2) {
        throw ShapeError("straightness_ratio: need at least two states, got " + shape_str(path.shape()));
    }
    const std::size_t last = path.rows() - 1, d = path.cols();
    std::vector<double> u(d);
    double chord = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        u[j] = path(last, j) - path(0, j);
        chord += u[j] * u[j];
    }
    chord = std::sqrt(chord);
    if (degenerate) *degenerate = chord < 1e-9;
    if (chord < 1e-9) return 0.0;
    for (double& c : u) c /= chord;

    double worst = 0.0;
    std::vector<double> w(d);
    for (std::size_t k = 1; k < last; ++k) {
        double along = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            w[j] = path(k, j) - path(0, j);
            along += w[j] * u[j];
        }
        double perp = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double r = w[j] - along * u[j];
            perp += r * r;
        }
        worst = std::max(worst, std::sqrt(perp));
    }
    return worst / chord;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: no values");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

StraightnessSummary straightness_summary(const Trajectory& trajectory) {
    StraightnessSummary s;
    const std::size_t n = trajectory.count();
    s.ratios.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool flat = false;
        s.ratios.push_back(straightness_ratio(trajectory.path(i), &flat));
        if (flat) ++s.degenerate;
    }
    if (n > 0) {
        s.median = quantile(s.ratios, 0.5);
        s.p90 = quantile(s.ratios, 0.9);
    }
    return s;
}

double ConsistencyReport::between(std::size_t nfe_a, std::size_t nfe_b) const {
    auto at = [&](std::size_t nfe) {
        const auto it = std::find(nfe_list.begin(), nfe_list.end(), nfe);
        if (it == nfe_list.end()) throw std::invalid_argument("ConsistencyReport: NFE " + std::to_string(nfe) + " not run");
        return static_cast<std::size_t>(it - nfe_list.begin());
    };
    return discrepancy(at(nfe_a), at(nfe_b));
}

ConsistencyReport endpoint_consistency(const VelocityFn& field, const Tensor& x0, const Tensor& z,
                                       const std::vector<std::size_t>& nfe_list, double scale) {
    if (nfe_list.empty()) throw std::invalid_argument("endpoint_consistency: empty NFE list");
    if (!(scale > 0.0)) throw std::invalid_argument("endpoint_consistency: scale must be > 0");
    ConsistencyReport r;
    r.nfe_list = nfe_list;
    for (std::size_t nfe : nfe_list) {
        r.endpoints.push_back(integrate_observed(field, x0, z, StepSchedule::uniform(nfe), nullptr));
    }
    const std::size_t k = nfe_list.size(), n = x0.rows(), d = x0.cols();
    r.discrepancy = Tensor(Shape{k, k}, 0.0);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double sq = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = r.endpoints[a](i, j) - r.endpoints[b](i, j);
                    sq += diff * diff;
                }
                s += std::sqrt(sq);
            }
            const double v = s / static_cast<double>(n) / scale;
            r.discrepancy(a, b) = v;
            r.discrepancy(b, a) = v;
        }
    return r;
}

EnergyEstimate energy_to_target(const VelocityField& field, const DatasetSpec& spec, std::size_t nfe,
                                std::size_t n, std::size_t replicates, Rng& rng) {
    if (replicates == 0 || n == 0) throw std::invalid_argument("energy_to_target: need n >= 1 and replicates >= 1");
    EnergyEstimate e;
    const auto source = source_sampler(spec);
    const auto schedule = StepSchedule::uniform(nfe);
    const VelocityFn v = velocity_fn(field);
    for (std::size_t r = 0; r < replicates; ++r) {
        Tensor x0 = source(n, rng);
        Tensor z = field.has_latent() ? LatentSpec(field.config().latent_dim).sample_prior(n, rng)
                                      : Tensor(Shape{n, 0});
        Tensor model = integrate_observed(v, x0, z, schedule, nullptr);
        Tensor target = sample_target(spec, n, rng);
        e.replicates.push_back(energy_distance(model, target));
    }
    double sum = 0.0;
    for (double x : e.replicates) sum += x;
    e.mean = sum / static_cast<double>(replicates);
    if (replicates > 1) {
        double ss = 0.0;
        for (double x : e.replicates) ss += (x - e.mean) * (x - e.mean);
        e.se = std::sqrt(ss / static_cast<double>(replicates - 1) / static_cast<double>(replicates));
    }
    return e;
}

double default_v_bin_width(const DatasetSpec& spec, Rng& rng) {
    return 0.1 * pooled_std(sample_target(spec, 10000, rng));
}

double model_v_estimate(const VelocityField& field, const DatasetSpec& spec, std::size_t n,
                        const std::vector<double>& t_grid, double h, Rng& rng, std::size_t nfe) {
    Tensor x0 = sample_source(spec, n, rng);
    Tensor z = field.has_latent() ? LatentSpec(field.config().latent_dim).sample_prior(n, rng) : Tensor(Shape{n, 0});
    Tensor x1 = integrate_observed(velocity_fn(field), x0, z, StepSchedule::uniform(nfe), nullptr);
    return estimate_v_functional(x0, x1, t_grid, h);
}

}  // namespace svfm
