#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace svfm {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,     // I/O and other unexpected errors
    kExitConfig = 2,      // bad or missing config, unknown suite, bad flags
    kExitDivergence = 3,  // non-finite loss or exploding gradients; failed sweep cells
    kExitCorrupt = 4,     // unreadable checkpoint
    kExitAssertion = 5,   // an oracle check failed
};

struct CommandOptions {
    std::string config;
    std::string checkpoint;
    std::string out;  // overrides output.dir where a config is involved
    std::optional<std::size_t> nfe;
    std::optional<std::size_t> n;
    std::optional<std::uint64_t> seed;
    bool export_trajectories = false;
    double tolerance_scale = 1.0;
    std::string suite = "all";
};

// Each command reports errors on `err` and returns an ExitCode.
int cmd_train(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sample(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_eval(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_oracle_check(const CommandOptions& opt, std::ostream& out, std::ostream& err);

// Argument parsing and dispatch for the `svfm` executable.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace svfm
