#pragma once

#include <cstdint>
#include <random>

#include "svfm/tensor.hpp"

namespace svfm {

/// 64-bit Mersenne Twister keyed by (seed, stream). The pair fully determines
/// the sequence; distinct streams are decorrelated through std::seed_seq.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform() { return uniform_(engine_); }  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return normal_(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    Tensor normal_tensor(Shape shape);
    Tensor uniform_tensor(Shape shape, double lo, double hi);

    // Child generator on a derived stream; does not advance this one.
    Rng fork(std::uint64_t substream) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace svfm
