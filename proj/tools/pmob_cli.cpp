// Experiment runner: executes configured runs, sweeps, config validation,
// and diagnostic replay on stored artifacts.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pmob/experiment.hpp"

namespace {

void print_report(const pmob::DiagnosticsReport& rep) {
    for (const auto& e : rep.entries) {
        std::printf("%s %-42s %.6g", e.pass ? "[pass]" : "[FAIL]", e.name.c_str(), e.value);
        if (e.tolerance) std::printf("  (tol %.3g)", *e.tolerance);
        std::printf("\n");
    }
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"obstacle-constrained degenerate diffusion simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, values_csv, artifact_dir;
    int workers = 1;
    long long seed = -1;
    bool strict = false;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config)
            cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides config and $PMOB_OUT)");
        cmd->add_option("--workers", workers, "worker threads for independent runs");
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_flag("--strict", strict, "treat warnings as failures");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "execute the configured experiment");
    add_common(run_cmd, true);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run once per value of a numeric field");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--axis", axis, "config field, e.g. solver.eps")->required();
    sweep_cmd->add_option("--values", values_csv, "comma-separated values")->required();

    CLI::App* check_cmd = app.add_subcommand("validate-config", "parse and validate a config");
    check_cmd->add_option("--config", config_path, "experiment config file")->required();

    CLI::App* replay_cmd =
        app.add_subcommand("replay", "re-run diagnostics on stored trajectories");
    replay_cmd->add_option("--artifact", artifact_dir, "artifact directory of a previous run")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        pmob::RunOptions opts;
        opts.out_dir = out_dir;
        opts.workers = workers;
        opts.strict = strict;
        if (seed >= 0) opts.seed_override = static_cast<std::uint64_t>(seed);

        if (app.got_subcommand(check_cmd)) {
            pmob::ExperimentConfig cfg = pmob::ExperimentConfig::parse_file(config_path);
            std::printf("ok: %s (%s)\n", config_path.c_str(), pmob::to_string(cfg.kind).c_str());
            return 0;
        }
        if (app.got_subcommand(replay_cmd)) {
            pmob::DiagnosticsReport rep = pmob::replay(artifact_dir);
            print_report(rep);
            return rep.all_pass() ? 0 : 1;
        }

        pmob::ExperimentConfig cfg = pmob::ExperimentConfig::parse_file(config_path);
        pmob::RunResult result;
        if (app.got_subcommand(sweep_cmd)) {
            result = pmob::sweep(cfg, axis, parse_values(values_csv), opts);
        } else {
            result = pmob::run_experiment(cfg, opts);
        }
        print_report(result.diagnostics);
        std::printf("artifact: %s\n", result.out_dir.c_str());
        return result.exit_code;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    }
}
