#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "support.hpp"
#include "svfm/checkpoint.hpp"
#include "svfm/errors.hpp"
#include "svfm/oracle.hpp"
#include "svfm/trainer.hpp"

using namespace svfm;
using svfm::testing::norm;
using svfm::testing::tiny_net;

namespace {

TrainConfig small_config(TrainMode mode) {
    TrainConfig c;
    c.mode = mode;
    c.weights.alpha = 10.0;
    c.weights.beta = 0.01;
    c.batch_size = 32;
    c.steps = 6;
    c.eval_every = 0;
    c.eval_n = 0;
    c.net = tiny_net(3);
    c.reflow_pairs = 200;
    c.reflow_nfe = 10;
    return c.normalized();
}

std::vector<double> all_values(const TrainState& s) {
    std::vector<double> out;
    for (const ParamStore* p : s.stores()) {
        const auto v = p->flat_values();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

std::vector<double> loss_curve(const TrainConfig& cfg) {
    std::vector<double> curve;
    TrainState s = TrainState::create(cfg);
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        Rng rng = step_rng(cfg, k);
        curve.push_back(train_step(s, cfg, batch_for_step(s, cfg, k, rng), rng).total);
    }
    return curve;
}

}  // namespace

TEST_CASE("config normalization and validation") {
    TrainConfig fm = small_config(TrainMode::fm);
    CHECK(fm.weights.alpha == 0.0);
    CHECK(fm.weights.beta == 0.0);
    CHECK(fm.net.latent_dim == 0);
    const TrainConfig vfm = small_config(TrainMode::vfm);
    CHECK(vfm.weights.alpha == 0.0);
    CHECK(vfm.weights.beta == 0.01);
    CHECK(small_config(TrainMode::svfm).weights.alpha == 10.0);

    fm.steps = 0;
    CHECK_THROWS_AS(fm.validate(), ConfigError);
    CHECK_THROWS_AS(run_training(fm), ConfigError);
    TrainConfig bad = small_config(TrainMode::svfm);
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config(TrainMode::svfm);
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config(TrainMode::fm);
    bad.weights.alpha = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(parse_mode("rectified"), ConfigError);
    CHECK(parse_mode("reflow") == TrainMode::reflow);

    TrainConfig ramp = small_config(TrainMode::svfm);
    ramp.alpha_warmup_steps = 4;
    CHECK(ramp.alpha_at(0) == 0.0);
    CHECK(ramp.alpha_at(2) == 5.0);
    CHECK(ramp.alpha_at(4) == 10.0);
}

TEST_CASE("first fm step with a zero output layer is mean |delta|^2") {
    TrainConfig cfg = small_config(TrainMode::fm);
    cfg.net.zero_init_output = true;
    TrainState s = TrainState::create(cfg);
    Rng rng = step_rng(cfg, 0);
    const CouplingBatch b = batch_for_step(s, cfg, 0, rng);
    double expected = 0.0;
    for (double d : b.delta.data()) expected += d * d;
    expected /= static_cast<double>(b.size());
    const StepLosses l = train_step(s, cfg, b, rng);
    CHECK(l.total == doctest::Approx(expected).epsilon(1e-13));
    CHECK(l.fm == l.total);
    CHECK(l.straightness == 0.0);
    CHECK(s.step == 1);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
    // Validation rejects lr = 0, so this drives train_step directly.
    for (TrainMode mode : {TrainMode::fm, TrainMode::svfm}) {
        TrainConfig cfg = small_config(mode);
        cfg.learning_rate = 0.0;
        TrainState s = TrainState::create(cfg);
        const auto before = all_values(s);
        for (std::size_t k = 0; k < 3; ++k) {
            Rng rng = step_rng(cfg, k);
            train_step(s, cfg, batch_for_step(s, cfg, k, rng), rng);
        }
        CHECK(all_values(s) == before);
    }
}

TEST_CASE("training is deterministic per seed") {
    for (TrainMode mode : {TrainMode::fm, TrainMode::vfm, TrainMode::svfm}) {
        const TrainConfig cfg = small_config(mode);
        CHECK(loss_curve(cfg) == loss_curve(cfg));
        TrainConfig other = cfg;
        other.seed = 1;
        CHECK(loss_curve(other) != loss_curve(cfg));
    }
    const TrainConfig cfg = small_config(TrainMode::svfm);
    CHECK(all_values(run_training(cfg).state) == all_values(run_training(cfg).state));
}

TEST_CASE("loss components add up") {
    TrainConfig cfg = small_config(TrainMode::svfm);
    cfg.alpha_warmup_steps = 3;
    TrainState s = TrainState::create(cfg);
    for (std::size_t k = 0; k < 6; ++k) {
        Rng rng = step_rng(cfg, k);
        const StepLosses l = train_step(s, cfg, batch_for_step(s, cfg, k, rng), rng);
        CHECK(std::abs(l.total - (l.vfm + l.alpha * l.straightness)) < 1e-10);
        CHECK(std::abs(l.vfm - (l.fm + cfg.weights.beta * l.kl)) < 1e-10);
        CHECK(l.alpha == cfg.alpha_at(k));
        if (l.alpha > 0.0) CHECK(l.straightness > 0.0);
        CHECK(l.grad_norm > 0.0);
    }
}

TEST_CASE("records arrive at the evaluation cadence") {
    TrainConfig cfg = small_config(TrainMode::svfm);
    cfg.steps = 5;
    cfg.eval_every = 2;
    cfg.eval_n = 64;
    std::vector<std::size_t> seen;
    const TrainResult r = run_training(cfg, {[&](const MetricsRecord& m) { seen.push_back(m.step); }});
    CHECK(seen == std::vector<std::size_t>{2, 4, 5});
    REQUIRE(r.history.size() == 3);
    for (const MetricsRecord& m : r.history) {
        CHECK(m.has_eval);
        CHECK(m.energy_nfe1 >= 0.0);
        CHECK(m.straightness_median >= 0.0);
        CHECK(std::abs(m.losses.total - (m.losses.vfm + m.losses.alpha * m.losses.straightness)) < 1e-10);
    }
}

TEST_CASE("checkpoint resume matches uninterrupted training") {
    for (TrainMode mode : {TrainMode::fm, TrainMode::svfm}) {
        ExperimentConfig exp;
        exp.train = small_config(mode);
        exp.train.steps = 5;
        const TrainResult full = run_training(exp.train);

        TrainConfig first = exp.train;
        first.steps = 3;
        const TrainResult part = run_training(first);
        const auto path = std::filesystem::temp_directory_path() / ("svfm_resume_" + to_string(mode) + ".ckpt");
        save_checkpoint(path.string(), exp, part.state);
        LoadedCheckpoint loaded = load_checkpoint(path.string());
        std::filesystem::remove(path);
        CHECK(loaded.state.step == 3);
        CHECK(all_values(loaded.state) == all_values(part.state));
        CHECK(loaded.state.adam.m == part.state.adam.m);

        std::vector<MetricsRecord> history;
        continue_training(loaded.state, exp.train, history);
        CHECK(loaded.state.step == 5);
        CHECK(all_values(loaded.state) == all_values(full.state));
    }
}

TEST_CASE("divergence guard names the step") {
    TrainConfig cfg = small_config(TrainMode::svfm);
    cfg.grad_norm_limit = 1e-12;
    TrainState s = TrainState::create(cfg);
    Rng rng = step_rng(cfg, 0);
    try {
        train_step(s, cfg, batch_for_step(s, cfg, 0, rng), rng);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("step 0") != std::string::npos);
        CHECK(msg.find("gradient norm") != std::string::npos);
    }

    TrainConfig fm = small_config(TrainMode::fm);
    TrainState t = TrainState::create(fm);
    Rng r2 = step_rng(fm, 0);
    CouplingBatch b = batch_for_step(t, fm, 0, r2);
    b.delta[0] = NAN;
    CHECK_THROWS_AS(train_step(t, fm, b, r2), NumericError);
}

TEST_CASE("the straightness term reaches the posterior") {
    // With alpha = 0 the posterior only sees the fm term; alpha > 0 must add
    // a gradient through z.
    TrainConfig with = small_config(TrainMode::svfm);
    with.weights.beta = 0.0;
    TrainConfig without = with;
    without.mode = TrainMode::vfm;
    without = without.normalized();

    auto posterior_grad = [](const TrainConfig& cfg) {
        TrainState s = TrainState::create(cfg);
        Rng rng = step_rng(cfg, 0);
        const CouplingBatch b = batch_for_step(s, cfg, 0, rng);
        TrainConfig frozen = cfg;
        frozen.learning_rate = 0.0;
        train_step(s, frozen, b, rng);
        return s.posterior->params().flat_grads();
    };
    const auto g_with = posterior_grad(with);
    const auto g_without = posterior_grad(without);
    CHECK(norm(g_with) > 0.0);
    std::vector<double> diff(g_with.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = g_with[i] - g_without[i];
    CHECK(norm(diff) > 1e-8 * norm(g_with));
}

TEST_CASE("reflow pairs") {
    TrainConfig base_cfg = small_config(TrainMode::fm);
    base_cfg.steps = 20;
    const TrainResult base = run_training(base_cfg);
    TrainConfig cfg = small_config(TrainMode::reflow);
    const auto [a0, a1] = reflow_pairs(*base.state.velocity, cfg);
    const auto [b0, b1] = reflow_pairs(*base.state.velocity, cfg);
    CHECK(a0 == b0);
    CHECK(a1 == b1);
    CHECK(a0.shape() == Shape{200, 2});

    // Deterministic pairs against independent ones of the same size.
    Rng rng(3);
    const Tensor i0 = sample_source(cfg.dataset, 200, rng), i1 = sample_target(cfg.dataset, 200, rng);
    const double h = 0.1 * pooled_std(i1);
    CHECK(estimate_v_functional(a0, a1, interior_grid(9), h) <= estimate_v_functional(i0, i1, interior_grid(9), h));

    const TrainResult r = reflow_round(cfg, *base.state.velocity);
    CHECK(r.state.step == cfg.steps);
    CHECK(r.state.pool_x0 == a0);
    CHECK_FALSE(r.state.posterior);

    Rng init(1);
    VelocityField latent(tiny_net(3), init);
    CHECK_THROWS(reflow_pairs(latent, cfg));
}
