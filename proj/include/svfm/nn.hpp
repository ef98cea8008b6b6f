#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svfm/jvp.hpp"
#include "svfm/rng.hpp"

namespace svfm {

/// Sinusoidal embedding of a scalar time: [sin(w_j t)..., cos(w_j t)...] with
/// w_j = 2*pi * 10^(decades * j / (dim/2 - 1)). `dim` must be even.
Tensor time_embed(double t, std::size_t dim, double decades = 4.0);

/// Batched, traced version. `t` is an [n, 1] column; result is [n, dim].
Dual time_embed(const Dual& t, std::size_t dim, double decades);

struct NetConfig {
    std::size_t data_dim = 2;
    std::size_t latent_dim = 8;  // 0: velocity field takes no latent
    std::size_t time_embed_dim = 16;
    double time_embed_decades = 1.0;
    std::size_t latent_embed_dim = 64;
    std::vector<std::size_t> velocity_hidden{256, 256, 256, 256};
    std::vector<std::size_t> posterior_hidden{256, 256, 256};
    bool zero_init_output = true;  // velocity output layer and posterior heads start at 0

    void validate() const;
};

struct LatentSpec {
    std::size_t latent_dim = 8;

    explicit LatentSpec(std::size_t dim);
    // z ~ N(0, I), one row per sample.
    Tensor sample_prior(std::size_t n, Rng& rng) const;
};

/// Variational posterior draw. Invariant: z = mu + exp(log_sigma) * eps.
struct PosteriorOutput {
    Tensor mu;
    Tensor log_sigma;
    Tensor z;
    Tensor eps;
};

// Dense layer x W + b with parameters `<prefix>.weight`, `<prefix>.bias`.
struct Linear {
    std::string prefix;
    std::size_t in = 0;
    std::size_t out = 0;
};

/// MLP velocity field v(x, t, z) -> R^d. The latent passes through a two-layer
/// embedding, then is concatenated with x and the time embedding.
class VelocityField {
public:
    VelocityField(const NetConfig& config, Rng& init_rng);

    const NetConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    bool has_latent() const { return config_.latent_dim > 0; }

    // x: [n, d], t: [n, 1], z: [n, latent_dim] (ignored when latent_dim = 0).
    Dual forward(Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>& z);
    Dual forward_frozen(Graph& g, const Dual& x, const Dual& t, const std::optional<Dual>& z) const;

    // Untraced evaluation with a shared scalar time.
    Tensor predict(const Tensor& x, double t, const Tensor* z) const;

private:
    template <class Bind>
    Dual run(Graph& g, Bind&& bind, const Dual& x, const Dual& t, const std::optional<Dual>& z) const;

    NetConfig config_;
    ParamStore params_;
    std::vector<Linear> latent_layers_;
    std::vector<Linear> layers_;
};

/// Gaussian posterior q(z | x0, x1, xt, t) with mean and log-std heads.
/// log_sigma is clamped to [kLogSigmaMin, kLogSigmaMax].
class PosteriorEncoder {
public:
    static constexpr double kLogSigmaMin = -7.0;
    static constexpr double kLogSigmaMax = 2.0;

    PosteriorEncoder(const NetConfig& config, Rng& init_rng);

    const NetConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    std::pair<Dual, Dual> forward(Graph& g, const Dual& x0, const Dual& x1, const Dual& xt, const Dual& t);
    std::pair<Dual, Dual> forward_frozen(Graph& g, const Dual& x0, const Dual& x1, const Dual& xt,
                                         const Dual& t) const;

private:
    template <class Bind>
    std::pair<Dual, Dual> run(Graph& g, Bind&& bind, const Dual& x0, const Dual& x1, const Dual& xt,
                              const Dual& t) const;

    NetConfig config_;
    ParamStore params_;
    std::vector<Linear> trunk_;
    Linear mu_head_;
    Linear log_sigma_head_;
};

/// z = mu + exp(log_sigma) * eps. `eps` carries no tangent.
Dual reparameterize(const Dual& mu, const Dual& log_sigma, const Var& eps);

// Uniform(-1/sqrt(in), 1/sqrt(in)) weights and biases; zero when `zero` is set.
void init_linear(ParamStore& store, const Linear& layer, Rng& rng, bool zero);

}  // namespace svfm
