#pragma once

#include <vector>

#include "svfm/dynamics.hpp"
#include "svfm/energy.hpp"

namespace svfm {

/// Largest perpendicular distance of an interior state from the chord line
/// (first state to last), divided by the chord length. `path` is [N + 1, d].
/// A chord shorter than 1e-9 yields 0 and sets *degenerate.
double straightness_ratio(const Tensor& path, bool* degenerate = nullptr);

struct StraightnessSummary {
    std::vector<double> ratios;  // one per trajectory
    double median = 0.0;
    double p90 = 0.0;
    std::size_t degenerate = 0;
};

StraightnessSummary straightness_summary(const Trajectory& trajectory);

// Linear-interpolated empirical quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct ConsistencyReport {
    std::vector<std::size_t> nfe_list;
    std::vector<Tensor> endpoints;  // one [n, d] tensor per NFE
    Tensor discrepancy;             // [k, k]: mean endpoint L2 distance / scale

    double between(std::size_t nfe_a, std::size_t nfe_b) const;
};

/// Integrates the same (x0, z) with a uniform schedule for every NFE in the
/// list and compares endpoints pairwise. `scale` is typically the target std.
ConsistencyReport endpoint_consistency(const VelocityFn& field, const Tensor& x0, const Tensor& z,
                                       const std::vector<std::size_t>& nfe_list, double scale);

struct EnergyEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::vector<double> replicates;
};

/// Energy distance between model samples at the given NFE and fresh target
/// samples, over `replicates` independent draws of n points each.
EnergyEstimate energy_to_target(const VelocityField& field, const DatasetSpec& spec, std::size_t nfe,
                                std::size_t n, std::size_t replicates, Rng& rng);

// Default bin width for model_v_estimate: a tenth of the pooled target std.
double default_v_bin_width(const DatasetSpec& spec, Rng& rng);

/// Non-intersection estimate on the model's own (Z0, Z1) pairs: Z0 from the
/// source, z from the prior, Z1 by integrating with `nfe` Euler steps.
double model_v_estimate(const VelocityField& field, const DatasetSpec& spec, std::size_t n,
                        const std::vector<double>& t_grid, double h, Rng& rng, std::size_t nfe = 100);

}  // namespace svfm
