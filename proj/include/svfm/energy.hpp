#pragma once

#include <string>

#include "svfm/tensor.hpp"

namespace svfm {

/// Point cloud tagged with the law it was drawn from.
struct SampleSet {
    Tensor points;  // [n, d]
    std::string label;
};

/// 2 E|a - b| - E|a - a'| - E|b - b'| with every expectation taken over all
/// ordered pairs (diagonal included). Exact; O(n log n) in 1-D and O(n m)
/// otherwise. Zero iff the two multisets coincide.
double energy_distance(const Tensor& a, const Tensor& b);
double energy_distance(const SampleSet& a, const SampleSet& b);

// Mean Euclidean distance over all ordered pairs (a_i, b_j).
double mean_pair_distance(const Tensor& a, const Tensor& b);

}  // namespace svfm
