#include "svfm/nn.hpp"

#include <cmath>
#include <numbers>

#include "svfm/errors.hpp"

namespace svfm {

namespace {

std::vector<double> frequencies(std::size_t dim, double decades) {
    if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("time_embed: dim must be even and positive, got " + std::to_string(dim));
    const std::size_t half = dim / 2;
    std::vector<double> w(half);
    for (std::size_t j = 0; j < half; ++j) {
        const double exponent = half > 1 ? decades * static_cast<double>(j) / static_cast<double>(half - 1) : 0.0;
        w[j] = 2.0 * std::numbers::pi * std::pow(10.0, exponent);
    }
    return w;
}

template <class Bind>
Dual apply_linear(Bind& bind, const Linear& layer, const Dual& x) {
    Dual w(bind(layer.prefix + ".weight"));
    Dual b(bind(layer.prefix + ".bias"));
    return add(matmul(x, w), b);
}

template <class Bind>
Dual apply_mlp(Bind& bind, const std::vector<Linear>& layers, Dual h, bool activate_last) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = apply_linear(bind, layers[i], h);
        if (i + 1 < layers.size() || activate_last) h = silu(h);
    }
    return h;
}

void check_batch(const char* op, const Dual& a, std::size_t cols, std::size_t rows) {
    const Shape& s = a.shape();
    if (s.size() != 2 || s[1] != cols || s[0] != rows) {
        throw ShapeError(std::string(op) + ": expected [" + std::to_string(rows) + "x" + std::to_string(cols) +
                         "], got " + shape_str(s));
    }
}

std::vector<Linear> chain_layers(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
                                 std::size_t out) {
    std::vector<Linear> layers;
    std::size_t prev = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        layers.push_back(Linear{prefix + "." + std::to_string(i), prev, hidden[i]});
        prev = hidden[i];
    }
    if (out) layers.push_back(Linear{prefix + "." + std::to_string(hidden.size()), prev, out});
    return layers;
}

}  // namespace

Tensor time_embed(double t, std::size_t dim, double decades) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("time_embed: t outside [0, 1]");
    const auto w = frequencies(dim, decades);
    const std::size_t half = w.size();
    Tensor out(Shape{dim});
    for (std::size_t j = 0; j < half; ++j) {
        out[j] = std::sin(w[j] * t);
        out[half + j] = std::cos(w[j] * t);
    }
    return out;
}

Dual time_embed(const Dual& t, std::size_t dim, double decades) {
    const auto w = frequencies(dim, decades);
    if (t.shape().size() != 2 || t.shape()[1] != 1) {
        throw ShapeError("time_embed: expected [n x 1] times, got " + shape_str(t.shape()));
    }
    Graph& g = t.graph();
    Var freqs = g.constant(Tensor(Shape{1, w.size()}, w));
    Dual arg = matmul(t, Dual(freqs));
    const Dual parts[] = {sin(arg), cos(arg)};
    return concat(parts);
}

void NetConfig::validate() const {
    if (data_dim == 0) throw ConfigError("net: data_dim must be positive");
    if (time_embed_dim == 0 || time_embed_dim % 2 != 0) throw ConfigError("net: time_embed_dim must be even and positive");
    if (velocity_hidden.empty() || posterior_hidden.empty()) throw ConfigError("net: hidden layer lists must be nonempty");
    for (auto h : velocity_hidden) if (h == 0) throw ConfigError("net: zero-width velocity layer");
    for (auto h : posterior_hidden) if (h == 0) throw ConfigError("net: zero-width posterior layer");
    if (latent_dim > 0 && latent_embed_dim == 0) throw ConfigError("net: latent_embed_dim must be positive");
}

LatentSpec::LatentSpec(std::size_t dim) : latent_dim(dim) {
    if (dim < 1) throw std::invalid_argument("LatentSpec: latent_dim must be >= 1");
}

Tensor LatentSpec::sample_prior(std::size_t n, Rng& rng) const { return rng.normal_tensor(Shape{n, latent_dim}); }

void init_linear(ParamStore& store, const Linear& layer, Rng& rng, bool zero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    Tensor w(Shape{layer.in, layer.out});
    Tensor b(Shape{layer.out});
    if (!zero) {
        for (double& x : w.storage()) x = rng.uniform(-bound, bound);
        for (double& x : b.storage()) x = rng.uniform(-bound, bound);
    }
    store.add(layer.prefix + ".weight", std::move(w));
    store.add(layer.prefix + ".bias", std::move(b));
}

// ---------------------------------------------------------------------------
// VelocityField

VelocityField::VelocityField(const NetConfig& config, Rng& init_rng) : config_(config) {
    config_.validate();
    std::size_t in = config_.data_dim + config_.time_embed_dim;
    if (has_latent()) {
        latent_layers_ = {Linear{"vel.latent.0", config_.latent_dim, config_.latent_embed_dim},
                          Linear{"vel.latent.1", config_.latent_embed_dim, config_.latent_embed_dim}};
        for (const auto& l : latent_layers_) init_linear(params_, l, init_rng, false);
        in += config_.latent_embed_dim;
    }
    layers_ = chain_layers("vel.mlp", in, config_.velocity_hidden, config_.data_dim);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        init_linear(params_, layers_[i], init_rng, config_.zero_init_output && i + 1 == layers_.size());
    }
}

template <class Bind>
Dual VelocityField::run(Graph& g, Bind&& bind, const Dual& x, const Dual& t, const std::optional<Dual>& z) const {
    const std::size_t n = x.shape().empty() ? 0 : x.shape()[0];
    check_batch("velocity_forward(x)", x, config_.data_dim, n);
    check_batch("velocity_forward(t)", t, 1, n);
    std::vector<Dual> parts{x, time_embed(t, config_.time_embed_dim, config_.time_embed_decades)};
    if (has_latent()) {
        if (!z) throw ShapeError("velocity_forward: latent field called without z");
        check_batch("velocity_forward(z)", *z, config_.latent_dim, n);
        parts.push_back(apply_mlp(bind, latent_layers_, *z, false));
    }
    (void)g;
    return apply_mlp(bind, layers_, concat(parts), false);
}

Dual VelocityField::forward(Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>& z) {
    auto bind = [&](const std::string& name) { return g.param(params_, name); };
    return run(g, bind, x, t, z);
}

Dual VelocityField::forward_frozen(Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>& z) const {
    auto bind = [&](const std::string& name) { return g.constant(params_.at(name).value); };
    return run(g, bind, x, t, z);
}

Tensor VelocityField::predict(const Tensor& x, double t, const Tensor* z) const {
    Graph g;
    const std::size_t n = x.rows();
    std::optional<Dual> zd;
    if (z) zd = Dual(g.constant(*z));
    Dual out = forward_frozen(g, Dual(g.constant(x)), Dual(g.constant(Tensor(Shape{n, 1}, t))), zd);
    return out.primal.value();
}

// ---------------------------------------------------------------------------
// PosteriorEncoder

PosteriorEncoder::PosteriorEncoder(const NetConfig& config, Rng& init_rng) : config_(config) {
    config_.validate();
    if (config_.latent_dim == 0) throw ConfigError("posterior: latent_dim must be >= 1");
    const std::size_t in = 3 * config_.data_dim + config_.time_embed_dim;
    trunk_ = chain_layers("post.mlp", in, config_.posterior_hidden, 0);
    for (const auto& l : trunk_) init_linear(params_, l, init_rng, false);
    const std::size_t h = config_.posterior_hidden.back();
    mu_head_ = Linear{"post.mu", h, config_.latent_dim};
    log_sigma_head_ = Linear{"post.log_sigma", h, config_.latent_dim};
    init_linear(params_, mu_head_, init_rng, config_.zero_init_output);
    init_linear(params_, log_sigma_head_, init_rng, config_.zero_init_output);
}

template <class Bind>
std::pair<Dual, Dual> PosteriorEncoder::run(Graph& g, Bind&& bind, const Dual& x0, const Dual& x1, const Dual& xt,
                                            const Dual& t) const {
    (void)g;
    const std::size_t n = x0.shape().empty() ? 0 : x0.shape()[0];
    check_batch("posterior_forward(x0)", x0, config_.data_dim, n);
    check_batch("posterior_forward(x1)", x1, config_.data_dim, n);
    check_batch("posterior_forward(xt)", xt, config_.data_dim, n);
    check_batch("posterior_forward(t)", t, 1, n);
    const Dual parts[] = {x0, x1, xt, time_embed(t, config_.time_embed_dim, config_.time_embed_decades)};
    Dual h = apply_mlp(bind, trunk_, concat(parts), true);
    Dual mu = apply_linear(bind, mu_head_, h);
    Dual log_sigma = clamp(apply_linear(bind, log_sigma_head_, h), kLogSigmaMin, kLogSigmaMax);
    return {mu, log_sigma};
}

std::pair<Dual, Dual> PosteriorEncoder::forward(Graph& g, const Dual& x0, const Dual& x1, const Dual& xt,
                                                const Dual& t) {
    auto bind = [&](const std::string& name) { return g.param(params_, name); };
    return run(g, bind, x0, x1, xt, t);
}

std::pair<Dual, Dual> PosteriorEncoder::forward_frozen(Graph& g, const Dual& x0, const Dual& x1, const Dual& xt,
                                                       const Dual& t) const {
    auto bind = [&](const std::string& name) { return g.constant(params_.at(name).value); };
    return run(g, bind, x0, x1, xt, t);
}

Dual reparameterize(const Dual& mu, const Dual& log_sigma, const Var& eps) {
    if (mu.shape() != log_sigma.shape() || mu.shape() != eps.shape()) {
        throw ShapeError("reparameterize: shapes " + shape_str(mu.shape()) + ", " + shape_str(log_sigma.shape()) +
                         ", " + shape_str(eps.shape()) + " differ");
    }
    return add(mu, mul(exp(log_sigma), Dual(eps)));
}

}  // namespace svfm
