#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "svfm/checkpoint.hpp"
#include "svfm/cli.hpp"
#include "svfm/errors.hpp"
#include "svfm/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace svfm {

namespace {

constexpr std::uint64_t kSampleStream = 0x73616d70;
constexpr std::uint64_t kSweepEvalStream = 0x73776565;

const char* kCheckpointFile = "checkpoint.svfm";
const char* kMetricsFile = "metrics.jsonl";

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kExitCorrupt;
    } catch (const NumericError& e) {
        err << "numeric divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

fs::path prepare_dir(const std::string& dir) {
    if (dir.empty()) throw ConfigError("output directory is empty");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir + "'");
    const fs::path probe = fs::path(dir) / ".write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("output directory '" + dir + "' is not writable");
    }
    fs::remove(probe, ec);
    return fs::path(dir);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    return f;
}

ExperimentConfig config_for(const CommandOptions& opt) {
    if (opt.config.empty()) throw ConfigError("--config is required");
    ExperimentConfig cfg = load_config(opt.config);
    if (opt.seed) cfg.train.seed = *opt.seed;
    if (!opt.out.empty()) cfg.output_dir = opt.out;
    if (opt.export_trajectories) cfg.export_trajectories = true;
    cfg.train.validate();
    return cfg;
}

json record_json(const MetricsRecord& r) {
    json j;
    j["step"] = r.step;
    j["loss_total"] = r.losses.total;
    j["loss_vfm"] = r.losses.vfm;
    j["loss_fm"] = r.losses.fm;
    j["loss_kl"] = r.losses.kl;
    j["loss_straightness"] = r.losses.straightness;
    j["alpha"] = r.losses.alpha;
    j["grad_norm"] = r.losses.grad_norm;
    if (r.has_eval) {
        j["straightness_median"] = r.straightness_median;
        j["straightness_p90"] = r.straightness_p90;
        j["v_estimate"] = r.v_estimate;
        j["energy_nfe1"] = r.energy_nfe1;
        j["energy_nfe100"] = r.energy_nfe100;
    }
    return j;
}

// Trains one experiment into `dir`; metrics are flushed record by record.
TrainResult train_into(const ExperimentConfig& cfg, const fs::path& dir) {
    std::ofstream metrics = open_out(dir / kMetricsFile);
    TrainHooks hooks;
    hooks.on_record = [&](const MetricsRecord& r) { metrics << record_json(r).dump() << "\n" << std::flush; };
    TrainResult result = run_training(cfg.train, hooks);
    save_checkpoint((dir / kCheckpointFile).string(), cfg, result.state);
    return result;
}

void write_row(std::ostream& o, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) o << (i ? "," : "") << cells[i];
    o << "\n";
}

std::size_t worker_count() {
    const char* env = std::getenv("SVFM_NUM_WORKERS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("SVFM_NUM_WORKERS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
}

}  // namespace

int cmd_train(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ExperimentConfig cfg = config_for(opt);
        const fs::path dir = prepare_dir(cfg.output_dir);
        const TrainResult r = train_into(cfg, dir);
        out << "trained " << to_string(cfg.train.mode) << " for " << r.state.step << " steps; final loss "
            << format_double(r.history.empty() ? 0.0 : r.history.back().losses.total) << "\n";
        out << "checkpoint: " << (dir / kCheckpointFile).string() << "\n";
        return kExitOk;
    });
}

int cmd_sample(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
        const LoadedCheckpoint ck = load_checkpoint(opt.checkpoint);
        const std::size_t nfe = opt.nfe.value_or(100), n = opt.n.value_or(1000);
        if (nfe < 1 || n < 1) throw ConfigError("--nfe and --n must be >= 1");
        const fs::path dir = prepare_dir(opt.out.empty() ? ck.config.output_dir : opt.out);
        Rng rng(opt.seed.value_or(0), kSampleStream);
        const SampleResult s = sample(*ck.state.velocity, n, source_sampler(ck.config.train.dataset),
                                      StepSchedule::uniform(nfe), rng, ck.config.stepper);
        const Trajectory& tr = s.trajectory;
        const std::size_t d = s.samples.cols();

        std::ofstream csv = open_out(dir / "samples.csv");
        std::vector<std::string> head{"sample_id"};
        for (std::size_t j = 0; j < d; ++j) head.push_back("x0_" + std::to_string(j));
        for (std::size_t j = 0; j < d; ++j) head.push_back("x1_" + std::to_string(j));
        write_row(csv, head);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::string> row{std::to_string(i)};
            for (std::size_t j = 0; j < d; ++j) row.push_back(format_double(tr.states.front()(i, j)));
            for (std::size_t j = 0; j < d; ++j) row.push_back(format_double(s.samples(i, j)));
            write_row(csv, row);
        }
        out << "samples: " << (dir / "samples.csv").string() << "\n";

        if (opt.export_trajectories || ck.config.export_trajectories) {
            std::ofstream tcsv = open_out(dir / "trajectories.csv");
            std::vector<std::string> th{"traj_id", "step", "t"};
            for (std::size_t j = 0; j < d; ++j) th.push_back("x_" + std::to_string(j));
            write_row(tcsv, th);
            const std::size_t count = std::min(n, ck.config.probe_count);
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t k = 0; k < tr.states.size(); ++k) {
                    std::vector<std::string> row{std::to_string(i), std::to_string(k), format_double(tr.times[k])};
                    for (std::size_t j = 0; j < d; ++j) row.push_back(format_double(tr.states[k](i, j)));
                    write_row(tcsv, row);
                }
            out << "trajectories: " << (dir / "trajectories.csv").string() << "\n";
        }
        return kExitOk;
    });
}

int cmd_eval(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
        const LoadedCheckpoint ck = load_checkpoint(opt.checkpoint);
        const std::size_t n = opt.n.value_or(2000), nfe = opt.nfe.value_or(100);
        if (n < 2 || nfe < 1) throw ConfigError("--n must be >= 2 and --nfe >= 1");
        const fs::path dir = prepare_dir(opt.out.empty() ? ck.config.output_dir : opt.out);
        const VelocityField& field = *ck.state.velocity;
        const DatasetSpec& spec = ck.config.train.dataset;
        Rng rng(opt.seed.value_or(0), kSampleStream + 1);

        Tensor x0 = sample_source(spec, n, rng);
        Tensor z = field.has_latent() ? LatentSpec(field.config().latent_dim).sample_prior(n, rng) : Tensor(Shape{n, 0});
        const Tensor target = sample_target(spec, n, rng);
        const double scale = pooled_std(target);
        const Trajectory tr = integrate(velocity_fn(field), x0, z, StepSchedule::uniform(nfe));
        const StraightnessSummary st = straightness_summary(tr);
        const ConsistencyReport cr = endpoint_consistency(velocity_fn(field), x0, z, {1, nfe}, scale);

        json j;
        j["step"] = ck.state.step;
        j["mode"] = to_string(ck.config.train.mode);
        j["n"] = n;
        j["nfe"] = nfe;
        j["straightness_median"] = st.median;
        j["straightness_p90"] = st.p90;
        j["consistency_nfe1"] = cr.between(1, nfe);
        j["v_estimate"] = estimate_v_functional(x0, tr.endpoint(), interior_grid(9), 0.1 * scale);
        for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{10}, nfe}) {
            const EnergyEstimate e = energy_to_target(field, spec, k, n, 3, rng);
            j["energy_nfe" + std::to_string(k)] = e.mean;
            j["energy_se_nfe" + std::to_string(k)] = e.se;
        }
        std::ofstream f = open_out(dir / "eval.jsonl");
        f << j.dump() << "\n";
        out << j.dump(2) << "\n";
        return kExitOk;
    });
}

int cmd_sweep(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const ExperimentConfig base = config_for(opt);
        if (base.sweep_alpha.empty() || base.sweep_beta.empty()) {
            throw ConfigError("sweep.alpha and sweep.beta must both be nonempty");
        }
        if (base.sweep_eval_n < 2 || base.sweep_eval_nfe < 1) throw ConfigError("sweep.eval_n >= 2, sweep.eval_nfe >= 1");
        const fs::path dir = prepare_dir(base.output_dir);
        const std::size_t rows = base.sweep_alpha.size(), cols = base.sweep_beta.size(), cells = rows * cols;
        std::vector<ExperimentConfig> cfgs(cells, base);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                ExperimentConfig& c = cfgs[i * cols + j];
                c.train.weights.alpha = base.sweep_alpha[i];
                c.train.weights.beta = base.sweep_beta[j];
                c.train = c.train.normalized();
                c.output_dir = (dir / ("cell_" + std::to_string(i) + "_" + std::to_string(j))).string();
                c.train.validate();
            }

        std::vector<double> metric(cells, std::numeric_limits<double>::quiet_NaN());
        std::vector<std::string> failure(cells);
        std::atomic<std::size_t> next{0};
        std::mutex log_mutex;
        auto worker = [&] {
            for (std::size_t k = next++; k < cells; k = next++) {
                try {
                    const fs::path cell_dir = prepare_dir(cfgs[k].output_dir);
                    const TrainResult r = train_into(cfgs[k], cell_dir);
                    Rng rng(base.train.seed, kSweepEvalStream);
                    metric[k] = energy_to_target(*r.state.velocity, cfgs[k].train.dataset, base.sweep_eval_nfe,
                                                 base.sweep_eval_n, 1, rng)
                                    .mean;
                } catch (const std::exception& e) {
                    failure[k] = e.what();
                }
                std::lock_guard lock(log_mutex);
                out << "cell " << k + 1 << "/" << cells << " alpha=" << format_double(cfgs[k].train.weights.alpha)
                    << " beta=" << format_double(cfgs[k].train.weights.beta)
                    << (failure[k].empty() ? " metric=" + format_double(metric[k]) : " FAILED: " + failure[k]) << "\n";
            }
        };
        const std::size_t workers = std::min(worker_count(), cells);
        std::vector<std::thread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        std::ofstream csv = open_out(dir / "sweep.csv");
        write_row(csv, {"alpha", "beta", "metric"});
        bool ok = true;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                const std::size_t k = i * cols + j;
                ok = ok && failure[k].empty() && std::isfinite(metric[k]);
                write_row(csv, {format_double(base.sweep_alpha[i]), format_double(base.sweep_beta[j]),
                                std::isfinite(metric[k]) ? format_double(metric[k]) : "NaN"});
            }
        out << "grid: " << (dir / "sweep.csv").string() << "\n";
        if (!ok) {
            err << "sweep: one or more cells failed\n";
            return kExitDivergence;
        }
        return kExitOk;
    });
}

int cmd_oracle_check(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto& names = oracle_suite_names();
        if (std::find(names.begin(), names.end(), opt.suite) == names.end()) {
            throw ConfigError("unknown suite '" + opt.suite + "' (expected marginal, cost, material, v-functional or all)");
        }
        SuiteOptions so;
        so.n = opt.n.value_or(so.n);
        so.seed = opt.seed.value_or(so.seed);
        so.tolerance_scale = opt.tolerance_scale;
        if (opt.nfe) so.steps = *opt.nfe;
        const auto rows = run_oracle_suite(opt.suite, so);

        std::size_t failed = 0;
        out << std::left << std::setw(14) << "suite" << std::setw(48) << "check" << std::setw(24) << "statistic"
            << std::setw(24) << "threshold"
            << "result\n";
        for (const auto& r : rows) {
            out << std::setw(14) << r.suite << std::setw(48) << r.name << std::setw(24) << format_double(r.statistic)
                << std::setw(24) << format_double(r.threshold) << (r.passed ? "PASS" : "FAIL") << "\n";
            if (!r.passed) {
                ++failed;
                err << "assertion failed: " << r.suite << " / " << r.name << ": statistic " << format_double(r.statistic)
                    << " vs threshold " << format_double(r.threshold) << "\n";
            }
        }
        out << rows.size() - failed << "/" << rows.size() << " checks passed\n";
        return failed == 0 ? kExitOk : kExitAssertion;
    });
}

}  // namespace svfm
