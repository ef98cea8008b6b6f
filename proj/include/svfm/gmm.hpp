#pragma once

#include <cstddef>
#include <vector>

#include "svfm/rng.hpp"
#include "svfm/tensor.hpp"

namespace svfm {

/// Isotropic Gaussian mixture target paired with a N(0, I) source.
/// A component std of 0 denotes a Dirac atom at its mean.
struct GmmSpec {
    std::vector<double> weights;
    Tensor means;  // [K, d]
    std::vector<double> stds;

    std::size_t components() const { return weights.size(); }
    std::size_t dim() const { return means.cols(); }
    void validate() const;

    Tensor sample(std::size_t n, Rng& rng) const;
    // Per-coordinate mean and variance of the mixture.
    std::vector<double> mean() const;
    std::vector<double> variance() const;
};

}  // namespace svfm
