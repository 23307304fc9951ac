#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pmob/config.hpp"
#include "pmob/diagnostics.hpp"

namespace pmob {

inline constexpr const char* kVersion = "0.1.0";
/// Environment variable overriding the artifact root.
inline constexpr const char* kOutDirEnv = "PMOB_OUT";

struct RunOptions {
    std::string out_dir;  // highest precedence; then $PMOB_OUT; then config
    int workers = 1;
    std::optional<std::uint64_t> seed_override;
    bool strict = false;
};

struct RunResult {
    int exit_code = 0;
    std::string out_dir;
    DiagnosticsReport diagnostics;
    std::vector<std::pair<std::string, double>> summary;

    double summary_value(const std::string& name) const;
};

/// Executes the configured experiment end to end and writes the artifact
/// directory (config echo, summary.csv, diagnostics, trajectory stores,
/// provenance). Exit code 0 iff every enabled diagnostic passes.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

/// One run per value of the named numeric field (e.g. "solver.eps"),
/// parallel across values, plus an aggregate table in the parent artifact.
RunResult sweep(const ExperimentConfig& cfg, const std::string& axis,
                const std::vector<double>& values, const RunOptions& opts);

/// Re-runs the record-based diagnostics on a stored artifact directory.
DiagnosticsReport replay(const std::string& artifact_dir);

void save_trajectory(const Trajectory& traj, const ExperimentConfig& cfg, const std::string& dir);
Trajectory load_trajectory(const std::string& dir);

/// Runs fn(0..n-1) on a bounded pool; deterministic output slots, exceptions
/// rethrown on the caller.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace pmob
