#include "svfm/trainer.hpp"

#include <cmath>

#include "svfm/errors.hpp"
#include "svfm/oracle.hpp"

namespace svfm {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kStepStream = 0x7374657000;
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kReflowStream = 0x7265666c;
constexpr double kRunningDecay = 0.99;

bool has_posterior(TrainMode m) { return m == TrainMode::vfm || m == TrainMode::svfm; }

}  // namespace

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::fm: return "fm";
        case TrainMode::vfm: return "vfm";
        case TrainMode::svfm: return "svfm";
        case TrainMode::reflow: return "reflow";
    }
    return "?";
}

TrainMode parse_mode(const std::string& name) {
    for (TrainMode m : {TrainMode::fm, TrainMode::vfm, TrainMode::svfm, TrainMode::reflow})
        if (to_string(m) == name) return m;
    throw ConfigError("unknown training mode '" + name + "' (expected fm, vfm, svfm or reflow)");
}

TrainConfig TrainConfig::normalized() const {
    TrainConfig c = *this;
    if (c.mode != TrainMode::svfm) c.weights.alpha = 0.0;
    if (!has_posterior(c.mode)) {
        c.weights.beta = 0.0;
        c.net.latent_dim = 0;
    }
    c.net.data_dim = c.dataset.dim();
    return c;
}

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train.steps must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("optimizer betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("optimizer.eps must be > 0");
    if (!(grad_norm_limit > 0.0)) throw ConfigError("train.grad_norm_limit must be > 0");
    weights.validate();
    dataset.validate();
    net.validate();
    if (net.data_dim != dataset.dim()) {
        throw ConfigError("net.data_dim " + std::to_string(net.data_dim) + " does not match dataset dimension " +
                          std::to_string(dataset.dim()));
    }
    if (has_posterior(mode) && net.latent_dim == 0) throw ConfigError(to_string(mode) + " mode needs net.latent_dim >= 1");
    if (mode != TrainMode::svfm && weights.alpha != 0.0) throw ConfigError("alpha must be 0 outside svfm mode");
    if (!has_posterior(mode) && (weights.beta != 0.0 || net.latent_dim != 0)) {
        throw ConfigError(to_string(mode) + " mode takes no latent (beta and net.latent_dim must be 0)");
    }
    if (mode == TrainMode::reflow && (reflow_pairs < 1 || reflow_nfe < 1)) {
        throw ConfigError("reflow.pairs and reflow.nfe must be >= 1");
    }
}

double TrainConfig::alpha_at(std::size_t step) const {
    if (alpha_warmup_steps == 0 || step >= alpha_warmup_steps) return weights.alpha;
    return weights.alpha * static_cast<double>(step) / static_cast<double>(alpha_warmup_steps);
}

TrainState TrainState::create(const TrainConfig& cfg) {
    TrainState s;
    Rng init(cfg.seed, kInitStream);
    s.velocity = std::make_unique<VelocityField>(cfg.net, init);
    if (cfg.net.latent_dim > 0) s.posterior = std::make_unique<PosteriorEncoder>(cfg.net, init);
    const std::size_t total = s.parameter_count();
    s.adam.m.assign(total, 0.0);
    s.adam.v.assign(total, 0.0);
    return s;
}

std::vector<ParamStore*> TrainState::stores() {
    std::vector<ParamStore*> out{&velocity->params()};
    if (posterior) out.push_back(&posterior->params());
    return out;
}

std::vector<const ParamStore*> TrainState::stores() const {
    std::vector<const ParamStore*> out{&velocity->params()};
    if (posterior) out.push_back(&posterior->params());
    return out;
}

std::size_t TrainState::parameter_count() const {
    std::size_t n = 0;
    for (const ParamStore* s : stores()) n += s->total_size();
    return n;
}

Rng step_rng(const TrainConfig& cfg, std::size_t step) {
    return Rng(cfg.seed, kStepStream + static_cast<std::uint64_t>(cfg.mode)).fork(step);
}

CouplingBatch batch_for_step(const TrainState& state, const TrainConfig& cfg, std::size_t, Rng& rng) {
    if (state.pool_x0.rank() == 2) return make_pair_batch(state.pool_x0, state.pool_x1, cfg.batch_size, rng);
    return make_batch(cfg.dataset, cfg.batch_size, rng);
}

StepLosses train_step(TrainState& state, const TrainConfig& cfg, const CouplingBatch& batch, Rng& rng) {
    const std::size_t step = state.step;
    const std::string where = " at step " + std::to_string(step);
    if (batch.dim() != state.velocity->config().data_dim) {
        throw ShapeError("train_step: batch dimension " + std::to_string(batch.dim()) + " does not match the network");
    }
    const std::size_t n = batch.size();
    const std::size_t latent = state.posterior ? state.posterior->config().latent_dim : 0;
    const Tensor eps = latent > 0 ? rng.normal_tensor(Shape{n, latent}) : Tensor(Shape{n, 0});

    StepLosses out;
    out.alpha = cfg.alpha_at(step);
    const auto stores = state.stores();
    for (ParamStore* s : stores) s->zero_grad();
    try {
        Graph g;
        const TracedPosterior post = state.posterior ? traced(*state.posterior) : TracedPosterior{};
        const TotalLossResult r =
            total_loss(g, traced(*state.velocity), post, batch, eps, LossWeights{out.alpha, cfg.weights.beta});
        out.total = r.total.item();
        out.vfm = r.vfm.item();
        out.fm = r.fm_term.item();
        out.kl = r.kl_term.item();
        out.straightness = r.straightness ? r.straightness->item() : 0.0;
        backward(g, r.total);
    } catch (const NumericError& e) {
        throw NumericError(std::string("non-finite value") + where + ": " + e.what());
    }

    double sq = 0.0;
    for (const ParamStore* s : stores)
        for (const auto& e : s->entries())
            for (double gi : e.grad.data()) sq += gi * gi;
    out.grad_norm = std::sqrt(sq);
    if (!std::isfinite(out.grad_norm)) throw NumericError("non-finite gradient" + where);
    if (out.grad_norm > cfg.grad_norm_limit) {
        throw NumericError("divergence" + where + ": gradient norm " + std::to_string(out.grad_norm) + " exceeds " +
                           std::to_string(cfg.grad_norm_limit));
    }

    AdamState& a = state.adam;
    a.step += 1;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(a.step));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(a.step));
    std::size_t k = 0;
    for (ParamStore* s : stores)
        for (std::size_t i = 0; i < s->size(); ++i) {
            auto& e = s->entry(i);
            auto& value = e.value.storage();
            const auto grad = e.grad.data();
            for (std::size_t j = 0; j < value.size(); ++j, ++k) {
                a.m[k] = cfg.adam_beta1 * a.m[k] + (1.0 - cfg.adam_beta1) * grad[j];
                a.v[k] = cfg.adam_beta2 * a.v[k] + (1.0 - cfg.adam_beta2) * grad[j] * grad[j];
                value[j] -= cfg.learning_rate * (a.m[k] / c1) / (std::sqrt(a.v[k] / c2) + cfg.adam_eps);
            }
        }
    state.running_total = step == 0 ? out.total : kRunningDecay * state.running_total + (1.0 - kRunningDecay) * out.total;
    state.step += 1;
    return out;
}

MetricsRecord evaluate(const VelocityField& field, const TrainConfig& cfg, std::size_t step) {
    MetricsRecord rec;
    rec.step = step;
    rec.has_eval = true;
    const std::size_t n = cfg.eval_n;
    Rng rng(cfg.seed, kEvalStream);
    Tensor x0 = sample_source(cfg.dataset, n, rng);
    Tensor z = field.has_latent() ? LatentSpec(field.config().latent_dim).sample_prior(n, rng) : Tensor(Shape{n, 0});
    Tensor target = sample_target(cfg.dataset, n, rng);
    const double h = 0.1 * pooled_std(target);

    const VelocityFn v = velocity_fn(field);
    const Trajectory traj = integrate(v, x0, z, StepSchedule::uniform(100));
    const StraightnessSummary s = straightness_summary(traj);
    rec.straightness_median = s.median;
    rec.straightness_p90 = s.p90;
    rec.energy_nfe100 = energy_distance(traj.endpoint(), target);
    rec.energy_nfe1 = energy_distance(integrate_observed(v, x0, z, StepSchedule::uniform(1), nullptr), target);
    rec.v_estimate = h > 0.0 ? estimate_v_functional(x0, traj.endpoint(), interior_grid(9), h) : 0.0;
    return rec;
}

void continue_training(TrainState& state, const TrainConfig& cfg, std::vector<MetricsRecord>& history,
                       const TrainHooks& hooks) {
    while (state.step < cfg.steps) {
        Rng rng = step_rng(cfg, state.step);
        const CouplingBatch batch = batch_for_step(state, cfg, state.step, rng);
        const StepLosses losses = train_step(state, cfg, batch, rng);
        const bool due = (cfg.eval_every > 0 && state.step % cfg.eval_every == 0) || state.step == cfg.steps;
        if (!due) continue;
        MetricsRecord rec;
        if (cfg.eval_n > 0) rec = evaluate(*state.velocity, cfg, state.step);
        rec.step = state.step;
        rec.losses = losses;
        history.push_back(rec);
        if (hooks.on_record) hooks.on_record(rec);
    }
}

std::pair<Tensor, Tensor> reflow_pairs(const VelocityField& base, const TrainConfig& cfg) {
    if (base.has_latent()) throw std::invalid_argument("reflow: the base field must be an fm field (no latent)");
    Rng rng(cfg.seed, kReflowStream);
    Tensor x0 = sample_source(cfg.dataset, cfg.reflow_pairs, rng);
    Tensor x1 = integrate_observed(velocity_fn(base), x0, Tensor(Shape{cfg.reflow_pairs, 0}),
                                   StepSchedule::uniform(cfg.reflow_nfe), nullptr);
    return {std::move(x0), std::move(x1)};
}

TrainResult reflow_round(const TrainConfig& cfg, const VelocityField& base, const TrainHooks& hooks) {
    TrainConfig c = cfg;
    c.mode = TrainMode::reflow;
    c = c.normalized();
    c.validate();
    TrainResult r{TrainState::create(c), {}};
    std::tie(r.state.pool_x0, r.state.pool_x1) = reflow_pairs(base, c);
    continue_training(r.state, c, r.history, hooks);
    return r;
}

TrainResult run_training(const TrainConfig& cfg, const TrainHooks& hooks) {
    const TrainConfig c = cfg.normalized();
    c.validate();
    if (c.mode == TrainMode::reflow) {
        TrainConfig base = c;
        base.mode = TrainMode::fm;
        if (c.reflow_base_steps > 0) base.steps = c.reflow_base_steps;
        base.eval_every = 0;
        base.eval_n = 0;
        const TrainResult first = run_training(base);
        return reflow_round(c, *first.state.velocity, hooks);
    }
    TrainResult r{TrainState::create(c), {}};
    continue_training(r.state, c, r.history, hooks);
    return r;
}

}  // namespace svfm
