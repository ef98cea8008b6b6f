#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svfm/gmm.hpp"
#include "svfm/rng.hpp"
#include "svfm/tensor.hpp"

namespace svfm {

/// Named source/target pair plus its geometry table. Every numeric parameter
/// is overridable; `make` fills in the defaults.
///
///   hexagonal       N(0, I) -> 6 Gaussians on a circle (radius, std, components)
///   eight_to_moons  8 Gaussians on a circle -> two interleaved moons
///   gauss_to_gauss  N(0, I_dim) -> N(target_mean, target_std^2 I_dim)
///   gmm_1d          N(0, 1) -> 1-D mixture (weights, means, stds)
struct DatasetSpec {
    std::string name;
    std::map<std::string, std::vector<double>> params;

    static DatasetSpec make(const std::string& name);
    static const std::vector<std::string>& known_names();

    std::size_t dim() const;
    double scalar(const std::string& key) const;
    const std::vector<double>& list(const std::string& key) const;
    void validate() const;

    // The target as a mixture when the source is N(0, I); empty otherwise.
    std::optional<GmmSpec> target_gmm() const;
};

/// Independent-coupling training tuples. Rows satisfy
/// xt = (1 - t) x0 + t x1 and delta = x1 - x0.
struct CouplingBatch {
    Tensor x0;     // [n, d]
    Tensor x1;     // [n, d]
    Tensor t;      // [n, 1]
    Tensor xt;     // [n, d]
    Tensor delta;  // [n, d]

    static CouplingBatch from_pairs(Tensor x0, Tensor x1, Tensor t);
    std::size_t size() const { return x0.rows(); }
    std::size_t dim() const { return x0.cols(); }
};

Tensor sample_source(const DatasetSpec& spec, std::size_t n, Rng& rng);
Tensor sample_target(const DatasetSpec& spec, std::size_t n, Rng& rng);

// Draws x0 and x1 independently, then t ~ U[0, 1] per row.
CouplingBatch make_batch(const DatasetSpec& spec, std::size_t n, Rng& rng);

// Uniform-t batch over a fixed pool of pairs (rows drawn with replacement).
CouplingBatch make_pair_batch(const Tensor& x0_pool, const Tensor& x1_pool, std::size_t n, Rng& rng);

// Root-mean per-coordinate standard deviation of a point cloud.
double pooled_std(const Tensor& points);

}  // namespace svfm
