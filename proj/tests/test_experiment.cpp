#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pmob/experiment.hpp"

using namespace pmob;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "pmob_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kSingleConfig = R"(
[model]
m = 2.0
K = 3.0
obstacle = ramp_plateau
obstacle_params = 0.3, 1.1, 0.002, 0.005, 0.5, 0.2, 0.35
reaction = sine
reaction_params = 0.4
noise = sine
noise_params = 0.03
noise_modes = 2
ic = constant
ic_params = 0.5

[solver]
dim = 1
points = 32
final_time = 0.01
dt = auto
eps = 1e-3
level = 4
record_stride = 8

[experiment]
kind = single
seed = 11
)";

}  // namespace

TEST_CASE("key-value config round trip is the identity") {
    KeyValueConfig a = KeyValueConfig::parse(kSingleConfig);
    KeyValueConfig b = KeyValueConfig::parse(a.serialize());
    CHECK(a == b);
    CHECK(b.serialize() == a.serialize());

    ExperimentConfig ec = ExperimentConfig::parse(kSingleConfig);
    ExperimentConfig ec2 = ExperimentConfig::parse(ec.serialize());
    CHECK(ec.raw == ec2.raw);
}

TEST_CASE("config schema errors name the field") {
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::parse("[model]\nnope = 1\n"),
                         doctest::Contains("model.nope"), ConfigError);
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::parse("[bogus]\nx = 1\n"),
                         doctest::Contains("bogus"), ConfigError);
    CHECK_THROWS_AS(
        (void)ExperimentConfig::parse("[solver]\neps_schedule = 1e-3, 1e-2\n"),
        ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse("[model]\nobstacle = martian\n"), ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse("[experiment]\nkind = refine-eps\n"),
                    ConfigError);
    CHECK_THROWS_AS((void)ExperimentConfig::parse("[solver]\ndt = fast\n"), ConfigError);
}

TEST_CASE("single run produces a complete, replayable artifact") {
    ExperimentConfig cfg = ExperimentConfig::parse(kSingleConfig);
    RunOptions opts;
    const fs::path out = fresh_dir("single");
    opts.out_dir = out.string();
    RunResult result = run_experiment(cfg, opts);
    CHECK(result.exit_code == 0);
    CHECK(fs::exists(out / "summary.csv"));
    CHECK(fs::exists(out / "diagnostics.json"));
    CHECK(fs::exists(out / "config.ini"));
    CHECK(fs::exists(out / "provenance.txt"));
    CHECK(fs::exists(out / "trajectory" / "index.csv"));

    // stored trajectory loads back bit-exactly
    Trajectory loaded = load_trajectory((out / "trajectory").string());
    CHECK(loaded.records() > 1);
    CHECK(loaded.stats.penalty_l2_qt_sq > 0.0);

    // replay recomputes the record-based diagnostics
    DiagnosticsReport rep = replay(out.string());
    CHECK(rep.all_pass());
    CHECK(fs::exists(out / "diagnostics_replay.json"));
}

TEST_CASE("summary bytes are identical across runs and worker counts") {
    std::string text = kSingleConfig;
    text.replace(text.find("kind = single"), 13, "kind = ensemble");
    text += "\n";
    ExperimentConfig cfg = ExperimentConfig::parse(text + "");
    // patch ensemble size via raw config to keep the file canonical
    KeyValueConfig raw = cfg.raw;
    raw.set("experiment", "ensemble", "6");
    cfg = ExperimentConfig::parse(raw.serialize());

    RunOptions one;
    one.out_dir = fresh_dir("det_w1").string();
    one.workers = 1;
    RunResult r1 = run_experiment(cfg, one);

    RunOptions four;
    four.out_dir = fresh_dir("det_w4").string();
    four.workers = 4;
    RunResult r4 = run_experiment(cfg, four);

    RunOptions again = one;
    again.out_dir = fresh_dir("det_again").string();
    RunResult r2 = run_experiment(cfg, again);

    const std::string s1 = read_file(fs::path(one.out_dir) / "summary.csv");
    CHECK(s1 == read_file(fs::path(four.out_dir) / "summary.csv"));
    CHECK(s1 == read_file(fs::path(again.out_dir) / "summary.csv"));
    CHECK(r1.exit_code == 0);
    CHECK(r4.exit_code == 0);
    CHECK(r2.exit_code == 0);
}

TEST_CASE("interrupted ensembles resume from stored members") {
    std::string text = kSingleConfig;
    text.replace(text.find("kind = single"), 13, "kind = ensemble");
    KeyValueConfig raw = ExperimentConfig::parse(text).raw;
    raw.set("experiment", "ensemble", "5");
    ExperimentConfig cfg = ExperimentConfig::parse(raw.serialize());

    RunOptions opts;
    const fs::path out = fresh_dir("resume");
    opts.out_dir = out.string();
    RunResult first = run_experiment(cfg, opts);
    const std::string full = read_file(out / "summary.csv");

    // simulate an interrupted run: two members and the aggregate disappear
    fs::remove_all(out / "members" / "member_001");
    fs::remove_all(out / "members" / "member_003");
    fs::remove(out / "summary.csv");
    RunResult second = run_experiment(cfg, opts);
    CHECK(read_file(out / "summary.csv") == full);
    CHECK(second.exit_code == first.exit_code);
}

TEST_CASE("sweep aggregates per-value summaries") {
    ExperimentConfig cfg = ExperimentConfig::parse(kSingleConfig);
    RunOptions opts;
    const fs::path out = fresh_dir("sweep");
    opts.out_dir = out.string();
    opts.workers = 2;
    RunResult result = sweep(cfg, "solver.eps", {1e-2, 1e-3}, opts);
    CHECK(result.exit_code == 0);
    CHECK(fs::exists(out / "aggregate.csv"));
    CHECK(fs::exists(out / "sweep_00" / "summary.csv"));
    CHECK(fs::exists(out / "sweep_01" / "summary.csv"));
    const std::string agg = read_file(out / "aggregate.csv");
    CHECK(agg.find("skorohod_defect") != std::string::npos);

    CHECK_THROWS_AS((void)sweep(cfg, "nodots", {1.0}, opts), ConfigError);
}

TEST_CASE("refine-eps experiment emits the monotonicity report") {
    KeyValueConfig raw = ExperimentConfig::parse(kSingleConfig).raw;
    raw.set("experiment", "kind", "refine-eps");
    raw.set("solver", "eps_schedule", "1e-3, 1e-4");
    ExperimentConfig cfg = ExperimentConfig::parse(raw.serialize());

    RunOptions opts;
    opts.out_dir = fresh_dir("refine").string();
    RunResult result = run_experiment(cfg, opts);
    CHECK(result.exit_code == 0);
    CHECK(result.diagnostics.find("order_violation_pair0") != nullptr);
    CHECK(result.summary_value("penalty_l2_slope") > 0.0);
}

TEST_CASE("stability pair with calibrated bound") {
    const char* text = R"(
[model]
m = 2.0
K = 3.0
ic = cosine
ic_params = 0.3, 0.2
ic2 = cosine
ic2_params = 0.5, 0.2

[solver]
dim = 1
points = 32
final_time = 0.01
dt = auto
level = 4

[experiment]
kind = stability-pair
ensemble = 2
seed = 3
)";
    ExperimentConfig cfg = ExperimentConfig::parse(text);
    RunOptions opts;
    opts.out_dir = fresh_dir("stability").string();
    RunResult result = run_experiment(cfg, opts);
    CHECK(result.exit_code == 0);
    CHECK(result.summary_value("stability_ratio") <= 1.0 + 1e-6);
    CHECK(result.summary_value("initial_distance") == doctest::Approx(0.2));
}

TEST_CASE("entropy suite runs end to end") {
    const char* text = R"(
[model]
m = 2.0
obstacle = ramp_plateau
obstacle_params = 0.3, 1.1, 0.002, 0.005, 0.5, 0.2, 0.35
ic = constant
ic_params = 0.5

[solver]
dim = 1
points = 24
final_time = 0.01
dt = auto
level = 4
eps_schedule = 1e-3, 1e-4

[experiment]
kind = entropy-suite
seed = 0

[diagnostics]
deltas = 1, 0.1
)";
    ExperimentConfig cfg = ExperimentConfig::parse(text);
    RunOptions opts;
    opts.out_dir = fresh_dir("entropy").string();
    RunResult result = run_experiment(cfg, opts);
    CHECK(result.exit_code == 0);
    CHECK(result.diagnostics.find("identity_antisymmetry")->pass);
    CHECK(result.summary_value("entropy_tolerance") > 0.0);
}

TEST_CASE("dt sweep drives the equality-case residual down") {
    // contact must persist into the cutoff ramp for the residual to carry
    // the time-pairing defect; no reaction keeps it there
    const char* text = R"(
[model]
m = 2.0
obstacle = ramp_plateau
obstacle_params = 0.3, 1.1, 0.005, 0.005, 0.5, 0.2, 0.35
ic = constant
ic_params = 0.5

[solver]
dim = 1
points = 32
final_time = 0.05
dt = 4e-5
level = 8
coeff_range = 3.0
record_stride = 1
eps = 1e-3

[experiment]
kind = entropy-suite
seed = 0

[diagnostics]
deltas = 1
)";
    ExperimentConfig cfg = ExperimentConfig::parse(text);
    RunOptions opts;
    const fs::path out = fresh_dir("dt_sweep");
    opts.out_dir = out.string();
    RunResult result = sweep(cfg, "solver.dt", {4e-5, 2e-5, 1e-5}, opts);
    CHECK(result.exit_code == 0);

    std::vector<double> residuals;
    for (int i = 0; i < 3; ++i) {
        std::ifstream in(out / ("sweep_0" + std::to_string(i)) / "summary.csv");
        REQUIRE(in.good());
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("residual_identity_plus,", 0) == 0)
                residuals.push_back(std::stod(line.substr(line.find(',') + 1)));
        }
    }
    REQUIRE(residuals.size() == 3);
    CHECK(std::abs(residuals[1]) < std::abs(residuals[0]));
    CHECK(std::abs(residuals[2]) < std::abs(residuals[1]));
}

TEST_CASE("zero-horizon run produces an artifact with the initial state only") {
    const char* text = R"(
[model]
ic = cosine
ic_params = 0.4, 0.2

[solver]
dim = 1
points = 16
final_time = 0.0
level = 2

[experiment]
kind = single
seed = 1
)";
    ExperimentConfig cfg = ExperimentConfig::parse(text);
    RunOptions opts;
    const fs::path out = fresh_dir("t0");
    opts.out_dir = out.string();
    RunResult result = run_experiment(cfg, opts);
    CHECK(result.exit_code == 0);
    Trajectory loaded = load_trajectory((out / "trajectory").string());
    CHECK(loaded.records() == 1);
    CHECK(loaded.times[0] == 0.0);
}
