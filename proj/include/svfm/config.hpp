#pragma once

#include <string>
#include <vector>

#include "svfm/dynamics.hpp"
#include "svfm/trainer.hpp"

namespace svfm {

/// One experiment: training settings plus output, export and sweep options.
struct ExperimentConfig {
    TrainConfig train;
    std::string output_dir = "out";
    bool export_trajectories = false;
    std::size_t probe_count = 64;  // trajectories exported by `sample`
    Stepper stepper = Stepper::euler;
    std::vector<double> sweep_alpha;
    std::vector<double> sweep_beta;
    std::size_t sweep_eval_n = 2000;
    std::size_t sweep_eval_nfe = 1;
};

/// Flat `section.key = value` text. Blank lines and `#` comments are
/// ignored, lists are comma-separated, unknown keys are errors. Dataset
/// parameters live under `data.` and default per `data.name`.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);  // ConfigError names the path

// Every key, fixed order, shortest round-trip number formatting.
std::string serialize_config(const ExperimentConfig& cfg);

// Shortest representation that parses back to the same double.
std::string format_double(double v);

}  // namespace svfm
