#include "svfm/data.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "svfm/errors.hpp"

namespace svfm {

// ---------------------------------------------------------------------------
// GmmSpec

void GmmSpec::validate() const {
    const std::size_t k = weights.size();
    if (k == 0) throw ConfigError("gmm: no components");
    if (means.rank() != 2 || means.rows() != k || stds.size() != k) throw ConfigError("gmm: inconsistent component counts");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ConfigError("gmm: negative weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("gmm: weights sum to " + std::to_string(total));
    for (double s : stds) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("gmm: component std must be >= 0");
    }
}

Tensor GmmSpec::sample(std::size_t n, Rng& rng) const {
    const std::size_t d = dim();
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        std::size_t k = 0;
        while (k + 1 < weights.size() && u >= weights[k]) u -= weights[k++];
        for (std::size_t j = 0; j < d; ++j) out(i, j) = means(k, j) + stds[k] * rng.normal();
    }
    return out;
}

std::vector<double> GmmSpec::mean() const {
    std::vector<double> m(dim(), 0.0);
    for (std::size_t k = 0; k < components(); ++k)
        for (std::size_t j = 0; j < dim(); ++j) m[j] += weights[k] * means(k, j);
    return m;
}

std::vector<double> GmmSpec::variance() const {
    const auto m = mean();
    std::vector<double> v(dim(), 0.0);
    for (std::size_t k = 0; k < components(); ++k)
        for (std::size_t j = 0; j < dim(); ++j) {
            const double dm = means(k, j) - m[j];
            v[j] += weights[k] * (stds[k] * stds[k] + dm * dm);
        }
    return v;
}

// ---------------------------------------------------------------------------
// DatasetSpec

namespace {

GmmSpec ring_mixture(std::size_t count, double radius, double std_dev, double phase_deg) {
    GmmSpec g;
    g.weights.assign(count, 1.0 / static_cast<double>(count));
    g.means = Tensor(Shape{count, 2});
    for (std::size_t k = 0; k < count; ++k) {
        const double a = (phase_deg + 360.0 * static_cast<double>(k) / static_cast<double>(count)) * std::numbers::pi / 180.0;
        g.means(k, 0) = radius * std::cos(a);
        g.means(k, 1) = radius * std::sin(a);
    }
    g.stds.assign(count, std_dev);
    // Equal weights may not sum to exactly 1 in floating point.
    g.weights.back() = 1.0 - std::accumulate(g.weights.begin(), g.weights.end() - 1, 0.0);
    return g;
}

std::size_t as_count(double v, const char* what) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError(std::string("dataset: ") + what + " must be a positive integer");
    return static_cast<std::size_t>(v);
}

Tensor standard_normal(std::size_t n, std::size_t d, Rng& rng) { return rng.normal_tensor(Shape{n, d}); }

}  // namespace

const std::vector<std::string>& DatasetSpec::known_names() {
    static const std::vector<std::string> names{"hexagonal", "eight_to_moons", "gauss_to_gauss", "gmm_1d"};
    return names;
}

DatasetSpec DatasetSpec::make(const std::string& name) {
    DatasetSpec s;
    s.name = name;
    if (name == "hexagonal") {
        s.params = {{"components", {6}}, {"radius", {6.0}}, {"std", {0.35}}};
    } else if (name == "eight_to_moons") {
        s.params = {{"source_components", {8}}, {"source_radius", {8.0}}, {"source_std", {0.4}},
                    {"moon_radius", {2.0}},      {"moon_offset_x", {1.0}}, {"moon_offset_y", {0.5}},
                    {"moon_noise", {0.1}}};
    } else if (name == "gauss_to_gauss") {
        s.params = {{"dim", {1}}, {"target_mean", {0.0}}, {"target_std", {1.0}}};
    } else if (name == "gmm_1d") {
        s.params = {{"weights", {0.3, 0.7}}, {"means", {-2.0, 3.0}}, {"stds", {0.5, 0.8}}};
    } else {
        throw ConfigError("unknown dataset '" + name + "'");
    }
    return s;
}

const std::vector<double>& DatasetSpec::list(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw ConfigError("dataset " + name + ": missing parameter '" + key + "'");
    return it->second;
}

double DatasetSpec::scalar(const std::string& key) const {
    const auto& v = list(key);
    if (v.size() != 1) throw ConfigError("dataset " + name + ": parameter '" + key + "' must be a scalar");
    return v[0];
}

std::size_t DatasetSpec::dim() const {
    if (name == "hexagonal" || name == "eight_to_moons") return 2;
    if (name == "gauss_to_gauss") return as_count(scalar("dim"), "dim");
    if (name == "gmm_1d") return 1;
    throw ConfigError("unknown dataset '" + name + "'");
}

void DatasetSpec::validate() const {
    if (name == "eight_to_moons") {
        as_count(scalar("source_components"), "source_components");
        if (!(scalar("source_std") > 0.0)) throw ConfigError("dataset: source_std must be > 0");
        if (!(scalar("moon_noise") > 0.0)) throw ConfigError("dataset: moon_noise must be > 0");
        if (!(scalar("moon_radius") > 0.0)) throw ConfigError("dataset: moon_radius must be > 0");
        scalar("source_radius");
        scalar("moon_offset_x");
        scalar("moon_offset_y");
        return;
    }
    if (name == "gauss_to_gauss") {
        dim();
        if (!(scalar("target_std") > 0.0)) throw ConfigError("dataset: target_std must be > 0");
        scalar("target_mean");
        return;
    }
    if (name == "hexagonal") {
        as_count(scalar("components"), "components");
        if (!(scalar("std") > 0.0)) throw ConfigError("dataset: std must be > 0");
        scalar("radius");
        return;
    }
    if (name == "gmm_1d") {
        for (double s : list("stds"))
            if (!(s > 0.0)) throw ConfigError("dataset: stds must be > 0");
        target_gmm()->validate();
        return;
    }
    throw ConfigError("unknown dataset '" + name + "'");
}

std::optional<GmmSpec> DatasetSpec::target_gmm() const {
    if (name == "hexagonal") {
        return ring_mixture(as_count(scalar("components"), "components"), scalar("radius"), scalar("std"), 0.0);
    }
    if (name == "gauss_to_gauss") {
        const std::size_t d = dim();
        GmmSpec g;
        g.weights = {1.0};
        g.means = Tensor(Shape{1, d}, scalar("target_mean"));
        g.stds = {scalar("target_std")};
        return g;
    }
    if (name == "gmm_1d") {
        GmmSpec g;
        g.weights = list("weights");
        const auto& m = list("means");
        g.means = Tensor(Shape{m.size(), 1}, m);
        g.stds = list("stds");
        return g;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Sampling

Tensor sample_source(const DatasetSpec& spec, std::size_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_source: n must be >= 1");
    if (spec.name == "eight_to_moons") {
        const auto ring = ring_mixture(as_count(spec.scalar("source_components"), "source_components"),
                                       spec.scalar("source_radius"), spec.scalar("source_std"), 0.0);
        return ring.sample(n, rng);
    }
    return standard_normal(n, spec.dim(), rng);
}

Tensor sample_target(const DatasetSpec& spec, std::size_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_target: n must be >= 1");
    if (spec.name == "eight_to_moons") {
        const double r = spec.scalar("moon_radius");
        const double ox = spec.scalar("moon_offset_x");
        const double oy = spec.scalar("moon_offset_y");
        const double noise = spec.scalar("moon_noise");
        Tensor out(Shape{n, 2});
        for (std::size_t i = 0; i < n; ++i) {
            const bool upper = rng.uniform() < 0.5;
            const double a = rng.uniform(0.0, std::numbers::pi);
            const double x = upper ? r * std::cos(a) - ox : ox - r * std::cos(a);
            const double y = upper ? r * std::sin(a) - oy : oy - r * std::sin(a);
            out(i, 0) = x + noise * rng.normal();
            out(i, 1) = y + noise * rng.normal();
        }
        return out;
    }
    const auto gmm = spec.target_gmm();
    if (!gmm) throw ConfigError("unknown dataset '" + spec.name + "'");
    return gmm->sample(n, rng);
}

CouplingBatch CouplingBatch::from_pairs(Tensor x0, Tensor x1, Tensor t) {
    if (x0.shape() != x1.shape() || x0.rank() != 2) {
        throw ShapeError("CouplingBatch: x0 " + shape_str(x0.shape()) + " vs x1 " + shape_str(x1.shape()));
    }
    const std::size_t n = x0.rows(), d = x0.cols();
    if (t.shape() != Shape{n, 1}) throw ShapeError("CouplingBatch: t must be [n x 1], got " + shape_str(t.shape()));
    CouplingBatch b;
    b.xt = Tensor(x0.shape());
    b.delta = Tensor(x0.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = t[i];
        if (!(ti >= 0.0 && ti <= 1.0)) throw std::invalid_argument("CouplingBatch: t outside [0, 1]");
        for (std::size_t j = 0; j < d; ++j) {
            b.xt(i, j) = (1.0 - ti) * x0(i, j) + ti * x1(i, j);
            b.delta(i, j) = x1(i, j) - x0(i, j);
        }
    }
    b.x0 = std::move(x0);
    b.x1 = std::move(x1);
    b.t = std::move(t);
    return b;
}

CouplingBatch make_batch(const DatasetSpec& spec, std::size_t n, Rng& rng) {
    Tensor x0 = sample_source(spec, n, rng);
    Tensor x1 = sample_target(spec, n, rng);
    Tensor t = rng.uniform_tensor(Shape{n, 1}, 0.0, 1.0);
    return CouplingBatch::from_pairs(std::move(x0), std::move(x1), std::move(t));
}

CouplingBatch make_pair_batch(const Tensor& x0_pool, const Tensor& x1_pool, std::size_t n, Rng& rng) {
    if (x0_pool.shape() != x1_pool.shape() || x0_pool.rows() == 0) throw ShapeError("make_pair_batch: bad pool");
    const std::size_t d = x0_pool.cols();
    Tensor x0(Shape{n, d}), x1(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.index(x0_pool.rows());
        for (std::size_t j = 0; j < d; ++j) {
            x0(i, j) = x0_pool(k, j);
            x1(i, j) = x1_pool(k, j);
        }
    }
    Tensor t = rng.uniform_tensor(Shape{n, 1}, 0.0, 1.0);
    return CouplingBatch::from_pairs(std::move(x0), std::move(x1), std::move(t));
}

double pooled_std(const Tensor& points) {
    const std::size_t n = points.rows(), d = points.cols();
    if (n < 2) return 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += points(i, j);
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += (points(i, j) - m) * (points(i, j) - m);
        total += v / static_cast<double>(n - 1);
    }
    return std::sqrt(total / static_cast<double>(d));
}

}  // namespace svfm
