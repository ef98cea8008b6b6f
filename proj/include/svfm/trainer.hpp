#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "svfm/metrics.hpp"
#include "svfm/objectives.hpp"

namespace svfm {

enum class TrainMode { fm, vfm, svfm, reflow };

std::string to_string(TrainMode mode);
TrainMode parse_mode(const std::string& name);  // throws ConfigError

struct TrainConfig {
    TrainMode mode = TrainMode::svfm;
    LossWeights weights;
    std::size_t alpha_warmup_steps = 0;  // linear ramp of alpha; 0 keeps it constant
    std::size_t batch_size = 512;
    std::size_t steps = 50000;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_norm_limit = 1e6;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1000;  // 0 disables periodic evaluation
    std::size_t eval_n = 512;
    DatasetSpec dataset = DatasetSpec::make("hexagonal");
    NetConfig net;
    // Reflow: base fm steps (0 means `steps`), pair-pool size and sampling NFE.
    std::size_t reflow_base_steps = 0;
    std::size_t reflow_pairs = 10000;
    std::size_t reflow_nfe = 100;

    /// Copy with the mode's forced settings applied: alpha = 0 unless svfm,
    /// beta = 0 for fm and reflow, and no latent for fm and reflow.
    TrainConfig normalized() const;
    void validate() const;  // throws ConfigError
    double alpha_at(std::size_t step) const;
};

/// Adam over the concatenation of several parameter stores.
struct AdamState {
    std::size_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

struct TrainState {
    std::size_t step = 0;
    std::unique_ptr<VelocityField> velocity;
    std::unique_ptr<PosteriorEncoder> posterior;  // null without a latent
    AdamState adam;
    // Reflow coupling ([n, d] each); left default-constructed for the other modes.
    Tensor pool_x0;
    Tensor pool_x1;
    double running_total = 0.0;  // exponential average of the total loss

    /// Fresh networks initialised from the config seed.
    static TrainState create(const TrainConfig& cfg);
    std::vector<ParamStore*> stores();
    std::vector<const ParamStore*> stores() const;
    std::size_t parameter_count() const;
};

struct StepLosses {
    double total = 0.0;
    double vfm = 0.0;
    double fm = 0.0;
    double kl = 0.0;
    double straightness = 0.0;
    double alpha = 0.0;
    double grad_norm = 0.0;
};

/// Loss, backward pass and one Adam update. Non-finite values and gradient
/// norms above the configured limit raise NumericError naming the step.
StepLosses train_step(TrainState& state, const TrainConfig& cfg, const CouplingBatch& batch, Rng& rng);

// Batch for step `step`: drawn from the dataset, or from the reflow pool.
CouplingBatch batch_for_step(const TrainState& state, const TrainConfig& cfg, std::size_t step, Rng& rng);

// Generator used for everything random within one step.
Rng step_rng(const TrainConfig& cfg, std::size_t step);

struct MetricsRecord {
    std::size_t step = 0;
    StepLosses losses;
    bool has_eval = false;
    double straightness_median = 0.0;
    double straightness_p90 = 0.0;
    double v_estimate = 0.0;
    double energy_nfe1 = 0.0;
    double energy_nfe100 = 0.0;
};

// Probe-set evaluation of a field on the config's dataset.
MetricsRecord evaluate(const VelocityField& field, const TrainConfig& cfg, std::size_t step);

struct TrainHooks {
    std::function<void(const MetricsRecord&)> on_record;
};

struct TrainResult {
    TrainState state;
    std::vector<MetricsRecord> history;
};

/// Trains from scratch. Reflow mode first trains a base fm field, then
/// returns the reflowed one. Each record goes to hooks.on_record as soon as
/// it exists, so a failure leaves the partial history with the caller.
TrainResult run_training(const TrainConfig& cfg, const TrainHooks& hooks = {});

// Steps `state` from state.step up to cfg.steps (same record cadence).
void continue_training(TrainState& state, const TrainConfig& cfg, std::vector<MetricsRecord>& history,
                       const TrainHooks& hooks = {});

/// (X0, X1hat) pairs from integrating `base` with cfg.reflow_nfe Euler steps.
std::pair<Tensor, Tensor> reflow_pairs(const VelocityField& base, const TrainConfig& cfg);

/// Fresh fm field trained on the deterministic coupling produced by `base`.
TrainResult reflow_round(const TrainConfig& cfg, const VelocityField& base, const TrainHooks& hooks = {});

}  // namespace svfm
