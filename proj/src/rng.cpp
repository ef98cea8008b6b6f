#include "svfm/rng.hpp"

namespace svfm {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5356464du};
    return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

Tensor Rng::normal_tensor(Shape shape) {
    Tensor t(std::move(shape));
    for (double& x : t.storage()) x = normal();
    return t;
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& x : t.storage()) x = uniform(lo, hi);
    return t;
}

Rng Rng::fork(std::uint64_t substream) const {
    // Mix the parent stream into the child id so fork(k) differs across parents.
    return Rng(seed_, (stream_ + 1) * 0x9E3779B97F4A7C15ull ^ substream);
}

}  // namespace svfm
