#include <iostream>

#include <CLI11.hpp>

#include "svfm/cli.hpp"

namespace svfm {

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Straight variational flow matching lab"};
    app.require_subcommand(1);
    CommandOptions opt;
    std::size_t nfe = 0, n = 0;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub, bool config, bool checkpoint) {
        if (config) sub->add_option("--config", opt.config, "Experiment config file")->required();
        if (checkpoint) sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint file")->required();
        sub->add_option("--out", opt.out, "Output directory");
        sub->add_option("--seed", seed, "Random seed");
    };
    auto* train = app.add_subcommand("train", "Train a model from a config");
    add_common(train, true, false);
    auto* samp = app.add_subcommand("sample", "Generate samples from a checkpoint");
    add_common(samp, false, true);
    samp->add_option("--nfe", nfe, "Euler steps");
    samp->add_option("--n", n, "Number of samples");
    samp->add_flag("--export-trajectories", opt.export_trajectories, "Also write trajectories.csv");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval, false, true);
    eval->add_option("--nfe", nfe, "Steps for the reference integration");
    eval->add_option("--n", n, "Probe-set size");
    auto* sweep = app.add_subcommand("sweep", "Train over the (alpha, beta) grid of a config");
    add_common(sweep, true, false);
    auto* oracle = app.add_subcommand("oracle-check", "Run the analytic-field check suites");
    oracle->add_option("suite", opt.suite, "marginal, cost, material, v-functional or all");
    oracle->add_option("--n", n, "Sample size");
    oracle->add_option("--nfe", nfe, "Euler steps for the analytic flow");
    oracle->add_option("--seed", seed, "Random seed");
    oracle->add_option("--tolerance-scale", opt.tolerance_scale, "Multiplier on statistical tolerances");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kExitConfig;
    }

    auto given = [](CLI::App* sub, const char* name) { return sub->count(name) > 0; };
    CLI::App* active = app.get_subcommands().front();
    if (given(active, "--seed")) opt.seed = seed;
    if (active != train && active != sweep) {
        if (given(active, "--nfe")) opt.nfe = nfe;
        if (given(active, "--n")) opt.n = n;
    }

    if (active == train) return cmd_train(opt, out, err);
    if (active == samp) return cmd_sample(opt, out, err);
    if (active == eval) return cmd_eval(opt, out, err);
    if (active == sweep) return cmd_sweep(opt, out, err);
    return cmd_oracle_check(opt, out, err);
}

}  // namespace svfm
