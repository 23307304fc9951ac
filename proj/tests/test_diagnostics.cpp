#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "pmob/diagnostics.hpp"
#include "test_util.hpp"

using namespace pmob;
using pmob::test::pick_dt;
using pmob::test::sampled;

namespace {

Field default_profile(const TorusGrid& g) {
    return sampled(g, [](double x, double) { return 1.0 + 0.5 * std::cos(2.0 * M_PI * x); });
}

struct Run {
    ModelSpec model;
    SolverConfig cfg;
    Trajectory traj;
};

Run make_run(int n_points, double T, bool with_noise, int stride = 1) {
    Run r;
    r.model.flux = FluxFunction(Nonlinearity(2.0, 3.0), 4);
    r.model.obstacle = Obstacle::ramp_bump(0.3, 1.3, 0.1 * T, 0.3, 0.5, 0.4);
    r.model.reaction = Reaction::sine(0.4);
    if (with_noise) r.model.noise = NoiseModel::from_config("sine", {0.03}, 2, 1);
    r.cfg.grid = TorusGrid(1, n_points);
    r.cfg.final_time = T;
    r.cfg.level = 4;
    r.cfg.record_stride = stride;
    Field ic(r.cfg.grid, 0.5);
    r.cfg.dt = pick_dt(r.cfg, r.model, default_coeff_range(r.cfg, r.model, ic));
    NoisePathSpec noise{.seed = 71, .mode_count = r.model.noise.mode_count()};
    r.traj = solve(r.cfg, r.model, ic, noise);
    return r;
}

}  // namespace

TEST_CASE("test entropy construction invariants") {
    TimeCutoff cutoff(1.0);
    TorusGrid g(1, 16);
    for (double delta : {1.0, 0.1, 0.01}) {
        EntropyTestPack pack = EntropyTestPack::convex(delta, cutoff, default_profile(g));
        // convex, compact support, integral and sup bounds of eta''
        double max_dd = 0.0;
        for (int i = 0; i <= 4000; ++i) {
            const double r = -1.5 * delta + 3.0 * delta * i / 4000.0;
            const double dd = pack.eta_second(r);
            CHECK(dd >= 0.0);
            if (std::abs(r) > delta) CHECK(dd == 0.0);
            max_dd = std::max(max_dd, dd);
        }
        CHECK(max_dd <= 2.0 / delta);
        const double mass = integrate_adaptive([&](double r) { return pack.eta_second(r); },
                                               -1.5 * delta, 1.5 * delta, 1e-11);
        CHECK(mass <= 2.0 + 1e-9);
        CHECK(mass == doctest::Approx(2.0).epsilon(1e-6));
        // |eta - |r|| <= delta, eta(0) = eta'(0) = 0
        CHECK(pack.eta(0.0) == 0.0);
        CHECK(pack.eta_prime(0.0) == 0.0);
        for (double r : {-3.0 * delta, -0.4 * delta, 0.7 * delta, 10.0 * delta}) {
            CHECK(std::abs(pack.eta(r) - std::abs(r)) <= delta * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("identity cases: antisymmetry and first-order decay") {
    Run coarse = make_run(16, 0.05, false);
    TimeCutoff cutoff(coarse.cfg.final_time);
    CompensationMeasure nu_c(coarse.traj);
    Field prof_c = default_profile(coarse.cfg.grid);

    EntropyResidual plus =
        entropy_residual(coarse.traj, nu_c, EntropyTestPack::identity(1.0, cutoff, prof_c));
    EntropyResidual minus =
        entropy_residual(coarse.traj, nu_c, EntropyTestPack::identity(-1.0, cutoff, prof_c));
    CHECK(std::abs(plus.total + minus.total) <= 1e-12 * (std::abs(plus.total) + 1.0));

    // refine dt and h jointly: the weak-form defect must shrink
    Run fine = make_run(32, 0.05, false);
    CompensationMeasure nu_f(fine.traj);
    EntropyResidual plus_f = entropy_residual(
        fine.traj, nu_f, EntropyTestPack::identity(1.0, cutoff, default_profile(fine.cfg.grid)));
    CHECK(std::abs(plus_f.total) < std::abs(plus.total));
    CHECK(std::abs(plus_f.total) <= std::abs(plus.total) / 1.5);
}

TEST_CASE("residual is linear in the test function") {
    Run run = make_run(16, 0.04, true, 2);
    TimeCutoff cutoff(run.cfg.final_time);
    CompensationMeasure nu(run.traj);
    Field prof = default_profile(run.cfg.grid);
    EntropyTestPack pack = EntropyTestPack::convex(0.1, cutoff, prof);

    EntropyResidual base = entropy_residual(run.traj, nu, pack);
    EntropyResidual twice = entropy_residual(run.traj, nu, pack.scaled(2.0));
    CHECK(twice.total == doctest::Approx(2.0 * base.total).epsilon(1e-12));

    // additivity over a disjoint-support decomposition of the profile
    Field left(run.cfg.grid), right(run.cfg.grid);
    for (int p = 0; p < run.cfg.grid.total_points(); ++p) {
        const double x = run.cfg.grid.coords(p)[0];
        const double b = x < 0.5 ? std::sin(2.0 * M_PI * x) : 0.0;
        left[p] = std::max(b, 0.0);
        right[p] = x >= 0.5 ? std::max(-std::sin(2.0 * M_PI * x), 0.0) : 0.0;
    }
    Field both(run.cfg.grid);
    for (int p = 0; p < run.cfg.grid.total_points(); ++p) both[p] = left[p] + right[p];
    const double a = entropy_residual(run.traj, nu, EntropyTestPack::convex(0.1, cutoff, left)).total;
    const double b = entropy_residual(run.traj, nu, EntropyTestPack::convex(0.1, cutoff, right)).total;
    const double c = entropy_residual(run.traj, nu, EntropyTestPack::convex(0.1, cutoff, both)).total;
    CHECK(c == doctest::Approx(a + b).epsilon(1e-10));
}

TEST_CASE("convex entropies hold within the calibrated tolerance") {
    Run run = make_run(32, 0.05, false);
    TimeCutoff cutoff(run.cfg.final_time);
    CompensationMeasure nu(run.traj);
    Field prof = default_profile(run.cfg.grid);

    const double cal = std::abs(
        entropy_residual(run.traj, nu, EntropyTestPack::identity(1.0, cutoff, prof)).total);
    for (double delta : {1.0, 0.1}) {
        EntropyResidual res =
            entropy_residual(run.traj, nu, EntropyTestPack::convex(delta, cutoff, prof));
        CHECK(res.total <= 3.0 * cal);
    }
}

TEST_CASE("skorohod defect identity") {
    Run run = make_run(32, 0.05, true, 1);
    CompensationMeasure nu(run.traj);
    const double defect = skorohod_defect(run.traj, nu);

    double l2sq = 0.0;
    const TorusGrid& g = run.cfg.grid;
    for (int j = 1; j < run.traj.records(); ++j) {
        Field psi = run.model.obstacle.sample(g, run.traj.times[j]);
        for (int p = 0; p < g.total_points(); ++p) {
            const double v = std::max(psi[p] - run.traj.states[j][p], 0.0);
            l2sq += run.traj.record_weight(j) * g.cell_volume() * v * v;
        }
    }
    CHECK(l2sq > 0.0);
    CHECK(defect == doctest::Approx(l2sq / run.cfg.eps).epsilon(1e-12));

    // no contact, no defect
    ModelSpec freem = run.model;
    freem.obstacle = Obstacle::constant(-4.0);
    Field ic(g, 0.5);
    SolverConfig cfg = run.cfg;
    cfg.dt = pick_dt(cfg, freem, default_coeff_range(cfg, freem, ic));
    Trajectory free_traj = solve(cfg, freem, ic,
                                 NoisePathSpec{.seed = 71, .mode_count = freem.noise.mode_count()});
    CHECK(skorohod_defect(free_traj, CompensationMeasure(free_traj)) == 0.0);
}

TEST_CASE("a priori monitors are finite and scale-stable") {
    Run run = make_run(32, 0.05, true, 4);
    DiagnosticsReport rep = apriori_monitor(run.traj);
    CHECK(rep.all_finite());
    CHECK(rep.find("sup_l2_sq") != nullptr);
    CHECK(rep.find("penalty_mass")->value >= 0.0);
    CHECK(!rep.config_fingerprint.empty());
}

TEST_CASE("l1 stability guards and contraction") {
    TorusGrid g(1, 32);
    ModelSpec model;
    model.flux = FluxFunction(Nonlinearity(2.0, 3.0), 4);
    Field ic1 = sampled(g, [](double x, double) { return 0.4 * std::sin(2.0 * M_PI * x); });
    Field ic2 = sampled(g, [](double x, double) { return 0.4 * std::sin(2.0 * M_PI * x) + 0.2; });
    SolverConfig cfg;
    cfg.grid = g;
    cfg.final_time = 0.02;
    cfg.level = 4;
    cfg.record_stride = 8;
    cfg.dt = pick_dt(cfg, model, default_coeff_range(cfg, model, ic2));
    NoisePathSpec noise{.seed = 5};

    Trajectory a = solve(cfg, model, ic1, noise);
    Trajectory b = solve(cfg, model, ic2, noise);
    StabilitySeries s = l1_stability(a, b);
    CHECK(s.initial_distance == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(s.ratio <= 1.0 + 1e-6);

    // identical data: identically zero distances
    Trajectory c = solve(cfg, model, ic1, noise);
    StabilitySeries z = l1_stability(a, c);
    CHECK(z.ratio == 0.0);
    for (double d : z.distance) CHECK(d == 0.0);

    // different configuration or noise stream is rejected
    SolverConfig cfg2 = cfg;
    cfg2.eps = cfg.eps * 0.5;
    Trajectory d = solve(cfg2, model, ic2, noise);
    CHECK_THROWS_AS((void)l1_stability(a, d), ConfigError);
    Trajectory e = solve(cfg, model, ic2, NoisePathSpec{.seed = 6});
    CHECK_THROWS_AS((void)l1_stability(a, e), ConfigError);
}

TEST_CASE("initial attainment") {
    TorusGrid g(1, 32);
    ModelSpec model;
    model.flux = FluxFunction(Nonlinearity(2.0, 3.0), 4);
    Field ic = sampled(g, [](double x, double) { return 0.3 + 0.2 * std::cos(2.0 * M_PI * x); });
    SolverConfig cfg;
    cfg.grid = g;
    cfg.final_time = 0.04;
    cfg.level = 4;
    {
        // step count divisible by 64 so that T/4, T/16, T/64 land on steps
        const double bound = SolverConfig::stable_dt(model, g, 6.0, cfg.cfl_safety);
        const long n = 64 * static_cast<long>(std::ceil(cfg.final_time / bound / 64.0));
        cfg.dt = cfg.final_time / static_cast<double>(n);
    }
    Trajectory traj = solve(cfg, model, ic, NoisePathSpec{.seed = 0});

    const double T = cfg.final_time;
    std::vector<double> a = initial_attainment(traj, ic, {T / 4.0, T / 16.0, T / 64.0});
    CHECK(a[0] >= a[1]);
    CHECK(a[1] >= a[2]);
    CHECK(a[2] >= 0.0);
    CHECK(a[2] <= a[0] / 4.0);

    // constant trajectory: zero by construction
    ModelSpec still;
    still.flux = FluxFunction(Nonlinearity(2.0, 3.0), 4);
    Field flat(g, 0.7);
    SolverConfig cfg2 = cfg;
    Trajectory quiet = solve(cfg2, still, flat, NoisePathSpec{.seed = 0});
    std::vector<double> z = initial_attainment(quiet, flat, {T / 4.0});
    CHECK(z[0] == 0.0);

    CHECK_THROWS_AS((void)initial_attainment(traj, ic, {T * 2.0}), ConfigError);
    CHECK_THROWS_AS((void)initial_attainment(traj, ic, {cfg.dt * 1.5}), ConfigError);
}

TEST_CASE("report serialization") {
    DiagnosticsReport rep;
    rep.config_fingerprint = "deadbeef";
    rep.add("alpha", 1.5);
    rep.add_checked("beta", 2.0, 1.0);
    CHECK(!rep.all_pass());
    std::ostringstream csv;
    rep.write_csv(csv);
    CHECK(csv.str().find("alpha") != std::string::npos);
    CHECK(rep.to_json().find("beta") != std::string::npos);
}

TEST_CASE("monitor means are stable across an epsilon decade") {
    // two small ensembles at fixed grid; the eps-scaled monitors plateau in
    // the asymptotic regime of the contact layer
    TorusGrid g(1, 64);
    ModelSpec model;
    model.flux = FluxFunction(Nonlinearity(2.0, 3.0), 8);
    model.obstacle = Obstacle::ramp_plateau(0.3, 1.1, 0.02, 0.005, 0.5, 0.2, 0.35);
    model.noise = NoiseModel::from_config("sine", {0.02}, 2, 1);
    Field ic(g, 0.5);
    SolverConfig cfg;
    cfg.grid = g;
    cfg.final_time = 0.5;
    cfg.dt = 2.5e-6;
    cfg.level = 8;
    cfg.coeff_range = 3.0;
    cfg.record_stride = 1 << 20;

    const int members = 4;
    std::map<std::string, double> mean_a, mean_b;
    for (int sweep = 0; sweep < 2; ++sweep) {
        SolverConfig c = cfg;
        c.eps = sweep == 0 ? 1e-3 : 1e-4;
        auto& dst = sweep == 0 ? mean_a : mean_b;
        for (int mem = 0; mem < members; ++mem) {
            NoisePathSpec noise{.seed = 31, .trajectory_id = static_cast<std::uint64_t>(mem),
                                .mode_count = 2};
            DiagnosticsReport rep = apriori_monitor(solve(c, model, ic, noise));
            for (const auto& e : rep.entries) dst[e.name] += e.value / members;
        }
    }
    for (const auto& kv : mean_a) {
        const double a = kv.second, b = mean_b.at(kv.first);
        INFO(kv.first, " a=", a, " b=", b);
        if (std::max(std::abs(a), std::abs(b)) < 1e-12) continue;
        CHECK(b >= 0.75 * a);
        CHECK(b <= 1.3333 * a);
    }
}

TEST_CASE("two dimensional stochastic entropy residual") {
    // the bracket-form drift terms of the inequality and the divergence-form
    // terms of the scheme are independent evaluation routes; the linear
    // entropies check one against the other
    TorusGrid g(2, 16);
    ModelSpec model;
    model.flux = FluxFunction(Nonlinearity(2.0, 3.0), 4);
    model.obstacle = Obstacle::constant(0.1);
    model.noise = NoiseModel::from_config("sine", {0.05}, 3, 2);
    Field ic = sampled(g, [](double x, double y) {
        return 0.5 + 0.2 * std::sin(2.0 * M_PI * x) * std::cos(2.0 * M_PI * y);
    });
    SolverConfig cfg;
    cfg.grid = g;
    cfg.final_time = 0.004;
    cfg.level = 4;
    cfg.record_stride = 1;
    cfg.dt = pick_dt(cfg, model, default_coeff_range(cfg, model, ic));
    Trajectory traj = solve(cfg, model, ic, NoisePathSpec{.seed = 99, .mode_count = 3});
    CompensationMeasure nu(traj);
    TimeCutoff cutoff(cfg.final_time);
    Field prof = sampled(g, [](double x, double y) {
        return 1.0 + 0.3 * std::cos(2.0 * M_PI * x) + 0.2 * std::sin(2.0 * M_PI * y);
    });

    EntropyResidual plus = entropy_residual(traj, nu, EntropyTestPack::identity(1.0, cutoff, prof));
    EntropyResidual minus =
        entropy_residual(traj, nu, EntropyTestPack::identity(-1.0, cutoff, prof));
    CHECK(std::abs(plus.total + minus.total) <= 1e-12 * (std::abs(plus.total) + 1.0));

    // cancellation quality: the defect must be far below the term scales
    const double scale = std::max({std::abs(plus.time_term), std::abs(plus.initial_term),
                                   std::abs(plus.diffusion_term), 1e-12});
    CHECK(std::abs(plus.total) <= 1e-4 * scale);

    EntropyResidual convex =
        entropy_residual(traj, nu, EntropyTestPack::convex(0.5, cutoff, prof));
    CHECK(std::isfinite(convex.total));
}
