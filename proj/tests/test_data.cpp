#include <doctest.h>

#include <cmath>
#include <numbers>

#include "svfm/data.hpp"
#include "svfm/errors.hpp"

using namespace svfm;

namespace {

std::vector<double> column_means(const Tensor& x) {
    std::vector<double> m(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) m[j] += x(i, j);
    for (double& v : m) v /= static_cast<double>(x.rows());
    return m;
}

double correlation(const Tensor& a, std::size_t ja, const Tensor& b, std::size_t jb) {
    const std::size_t n = a.rows();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a(i, ja);
        mb += b(i, jb);
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a(i, ja) - ma, db = b(i, jb) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("dataset registry") {
    for (const auto& name : DatasetSpec::known_names()) CHECK_NOTHROW(DatasetSpec::make(name).validate());
    CHECK_THROWS_AS(DatasetSpec::make("swiss_roll"), ConfigError);
    CHECK(DatasetSpec::make("hexagonal").dim() == 2);
    CHECK(DatasetSpec::make("gmm_1d").dim() == 1);
    DatasetSpec bad = DatasetSpec::make("gmm_1d");
    bad.params["weights"] = {0.5, 0.6};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    DatasetSpec zero_std = DatasetSpec::make("hexagonal");
    zero_std.params["std"] = {0.0};
    CHECK_THROWS_AS(zero_std.validate(), ConfigError);
}

TEST_CASE("hexagonal source and target means sit within the CLT bound") {
    const DatasetSpec spec = DatasetSpec::make("hexagonal");
    const std::size_t n = 100000;
    Rng rng(1);
    for (double m : column_means(sample_source(spec, n, rng))) CHECK(std::abs(m) < 4.0 / std::sqrt(double(n)));
    const auto var = spec.target_gmm()->variance();
    const auto mt = column_means(sample_target(spec, n, rng));
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(mt[j]) < 4.0 * std::sqrt(var[j] / n));
}

TEST_CASE("eight-Gaussian source clusters are balanced") {
    const DatasetSpec spec = DatasetSpec::make("eight_to_moons");
    const std::size_t n = 100000;
    Rng rng(2);
    const Tensor x = sample_source(spec, n, rng);
    std::vector<std::size_t> counts(8, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t k = 0; k < 8; ++k) {
            const double a = k * std::numbers::pi / 4.0;
            const double d = std::hypot(x(i, 0) - 8.0 * std::cos(a), x(i, 1) - 8.0 * std::sin(a));
            if (d < best_d) best_d = d, best = k;
        }
        ++counts[best];
    }
    for (std::size_t c : counts) {
        CHECK(c >= 0.9 * n / 8.0);
        CHECK(c <= 1.1 * n / 8.0);
    }
}

TEST_CASE("two-moons points stay near their arcs") {
    // Each moon lies on a radius-2 arc around (-1, -0.5) or (1, 0.5); the far
    // tips reach |x| = sqrt(9.25), so the bound is centre + radius + 4 noise.
    const DatasetSpec spec = DatasetSpec::make("eight_to_moons");
    const std::size_t n = 10000;
    Rng rng(3);
    const Tensor x = sample_target(spec, n, rng);
    const double bound = std::hypot(1.0, 0.5) + 2.0 + 4 * 0.1;
    std::size_t outside = 0;
    for (std::size_t i = 0; i < n; ++i) outside += std::hypot(x(i, 0), x(i, 1)) > bound;
    CHECK(outside <= n / 1000);
    const auto m = column_means(x);
    CHECK(std::abs(m[0]) < 0.05);
    CHECK(std::abs(m[1]) < 0.05);
}

TEST_CASE("samplers are deterministic per seed") {
    for (const auto& name : DatasetSpec::known_names()) {
        const DatasetSpec spec = DatasetSpec::make(name);
        Rng a(7, 3), b(7, 3);
        CHECK(sample_source(spec, 257, a) == sample_source(spec, 257, b));
        CHECK(sample_target(spec, 257, a) == sample_target(spec, 257, b));
    }
    Rng rng(1);
    CHECK_THROWS(sample_source(DatasetSpec::make("hexagonal"), 0, rng));
}

TEST_CASE("coupling batches satisfy the interpolant identities") {
    Rng rng(4);
    const CouplingBatch b = make_batch(DatasetSpec::make("eight_to_moons"), 1000, rng);
    CHECK(b.size() == 1000);
    CHECK(b.dim() == 2);
    double worst = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double t = b.t[i];
        CHECK(t >= 0.0);
        CHECK(t <= 1.0);
        for (std::size_t j = 0; j < 2; ++j) {
            worst = std::max(worst, std::abs(b.xt(i, j) - ((1 - t) * b.x0(i, j) + t * b.x1(i, j))));
            CHECK(b.delta(i, j) == b.x1(i, j) - b.x0(i, j));
        }
    }
    CHECK(worst < 1e-12);

    const Tensor x0 = Tensor::matrix({{1, 2}, {3, 4}}), x1 = Tensor::matrix({{-5, 6}, {7, -8}});
    const CouplingBatch ends = CouplingBatch::from_pairs(x0, x1, Tensor::matrix({{0.0}, {1.0}}));
    CHECK(ends.xt.row(0) == x0.row(0));
    CHECK(ends.xt.row(1) == x1.row(1));
    CHECK_THROWS(CouplingBatch::from_pairs(x0, x1, Tensor::matrix({{0.5}, {1.5}})));
    CHECK_THROWS_AS(CouplingBatch::from_pairs(x0, Tensor(Shape{2, 3}), Tensor::matrix({{0.5}, {0.5}})), ShapeError);
}

TEST_CASE("the independent coupling is uncorrelated") {
    Rng rng(5);
    const CouplingBatch b = make_batch(DatasetSpec::make("hexagonal"), 100000, rng);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(correlation(b.x0, j, b.x1, k)) < 0.01);
}

TEST_CASE("pair batches draw rows of the pool") {
    const Tensor x0 = Tensor::matrix({{0, 0}, {1, 1}, {2, 2}});
    const Tensor x1 = Tensor::matrix({{10, 0}, {11, 1}, {12, 2}});
    Rng rng(6);
    const CouplingBatch b = make_pair_batch(x0, x1, 50, rng);
    for (std::size_t i = 0; i < 50; ++i) CHECK(b.x1(i, 0) - b.x0(i, 0) == 10.0);
    CHECK_THROWS_AS(make_pair_batch(x0, Tensor(Shape{2, 2}), 5, rng), ShapeError);
}

TEST_CASE("random streams") {
    Rng a(9, 0), b(9, 0);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    for (std::uint64_t s = 1; s < 50; ++s) {
        Rng x(9, 0), y(9, s);
        bool same = true;
        for (int i = 0; i < 16; ++i) same = same && x.next_u64() == y.next_u64();
        CHECK_FALSE(same);
    }
    const Rng parent(3, 4);
    Rng f1 = parent.fork(1), f2 = parent.fork(1), f3 = parent.fork(2);
    const auto v1 = f1.next_u64();
    CHECK(v1 == f2.next_u64());
    CHECK(v1 != f3.next_u64());
}

TEST_CASE("pooled std") {
    // Unbiased per-coordinate variances 2 and 8.
    CHECK(pooled_std(Tensor::matrix({{0, 0}, {2, 4}})) == doctest::Approx(std::sqrt(5.0)));
    CHECK(pooled_std(Tensor::matrix({{1, 1}})) == 0.0);
}
