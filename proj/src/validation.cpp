#include "pmob/validation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pmob/numerics.hpp"

namespace pmob {

namespace {
double torus_delta(double x, double c) {
    double d = x - c;
    d -= std::round(d);
    return d;  // in [-1/2, 1/2]
}
}  // namespace

double BarenblattParams::profile_constant() const {
    const double p = 1.0 / (m - 1.0);
    if (dim == 1) {
        // mass = C^{p + 1/2} k^{-1/2} B(1/2, p+1)
        const double b = std::beta(0.5, p + 1.0);
        return std::pow(mass * std::sqrt(k()) / b, 1.0 / (p + 0.5));
    }
    // mass = pi/k * C^{p+1} / (p+1)
    return std::pow(mass * k() * (p + 1.0) / M_PI, 1.0 / (p + 1.0));
}

double BarenblattParams::support_radius(double t) const {
    return std::sqrt(profile_constant() / k()) * std::pow(t + t0, beta());
}

double BarenblattParams::peak_value(double t) const {
    return std::pow(profile_constant(), 1.0 / (m - 1.0)) * std::pow(t + t0, -alpha());
}

double barenblatt(double x, double y, double t, const BarenblattParams& p) {
    if (t + p.t0 <= 0.0) throw OracleError("barenblatt: t + t0 must be positive");
    if (p.support_radius(t) >= 0.5)
        throw OracleError("barenblatt: support reaches the period boundary");
    const double th = t + p.t0;
    const double dx = torus_delta(x, p.center_x);
    double r2 = dx * dx;
    if (p.dim == 2) {
        const double dy = torus_delta(y, p.center_y);
        r2 += dy * dy;
    }
    const double arg =
        p.profile_constant() - p.k() * r2 * std::pow(th, -2.0 * p.beta());
    if (arg <= 0.0) return 0.0;
    return std::pow(th, -p.alpha()) * std::pow(arg, 1.0 / (p.m - 1.0));
}

Field barenblatt_field(const TorusGrid& g, double t, const BarenblattParams& p) {
    Field f(g);
    for (int q = 0; q < g.total_points(); ++q) {
        const auto xy = g.coords(q);
        f[q] = barenblatt(xy[0], xy[1], t, p);
    }
    return f;
}

ConvergenceStudy convergence_study(const BarenblattParams& p, const std::vector<int>& grid_sizes,
                                   double final_time, double cfl_safety, Scheme scheme) {
    ConvergenceStudy out;
    ModelSpec model;
    model.flux = FluxFunction(Nonlinearity(p.m, 3.0), 0);
    for (int n : grid_sizes) {
        TorusGrid g(p.dim, n);
        Field ic = barenblatt_field(g, 0.0, p);
        SolverConfig cfg;
        cfg.grid = g;
        cfg.final_time = final_time;
        cfg.level = 0;
        cfg.cfl_safety = cfl_safety;
        cfg.scheme = scheme;
        cfg.record_stride = 1 << 20;  // only the end state matters here
        const double bound =
            SolverConfig::stable_dt(model, g, default_coeff_range(cfg, model, ic), cfl_safety);
        cfg.dt = SolverConfig::fitted_dt(final_time, bound);
        Trajectory traj = solve(cfg, model, ic, NoisePathSpec{.seed = 0});
        Field exact = barenblatt_field(g, final_time, p);
        CompensatedSum err;
        for (int q = 0; q < g.total_points(); ++q)
            err.add(std::abs(traj.final_state()[q] - exact[q]));
        out.grid_sizes.push_back(n);
        out.spacings.push_back(g.spacing());
        out.errors.push_back(g.cell_volume() * err.value());
    }
    for (size_t i = 0; i + 1 < out.errors.size(); ++i) {
        if (!(out.errors[i + 1] < out.errors[i])) out.monotone = false;
    }
    // least-squares slope of log(err) against log(h)
    const size_t n = out.errors.size();
    if (n >= 2) {
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double lx = std::log(out.spacings[i]);
            const double ly = std::log(std::max(out.errors[i], 1e-300));
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        out.fitted_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Comparison functions

namespace {
double signed_power(double v, double m) { return std::copysign(std::pow(std::abs(v), m), v); }
}  // namespace

ComparisonFunction ComparisonFunction::obstacle_plus_constant(const Obstacle& psi, double c,
                                                              double m) {
    (void)m;
    if (!psi.time_independent())
        throw ConfigError("obstacle_plus_constant: needs a time-independent barrier");
    ComparisonFunction f;
    f.name = "obstacle_plus_" + std::to_string(c);
    f.v = [psi, c](double t, double x, double y) { return psi(t, x, y) + c; };
    f.dt_vm = [](double, double, double) { return 0.0; };
    return f;
}

ComparisonFunction ComparisonFunction::obstacle_plus_bump(const Obstacle& psi, double c,
                                                          double amp, double center, double width,
                                                          double m) {
    (void)m;
    if (!psi.time_independent())
        throw ConfigError("obstacle_plus_bump: needs a time-independent barrier");
    ComparisonFunction f;
    f.name = "obstacle_plus_bump";
    Obstacle bump = Obstacle::bump(c, amp, center, width);
    f.v = [psi, bump](double t, double x, double y) { return psi(t, x, y) + bump(t, x, y); };
    f.dt_vm = [](double, double, double) { return 0.0; };
    return f;
}

ComparisonFunction ComparisonFunction::modulated_sine(double base, double amp, double period,
                                                      double m) {
    ComparisonFunction f;
    f.name = "modulated_sine";
    auto value = [base, amp, period](double t, double x) {
        return base +
               amp * std::sin(2.0 * M_PI * x) * (1.0 + 0.5 * std::sin(2.0 * M_PI * t / period));
    };
    f.v = [value](double t, double x, double) { return value(t, x); };
    f.dt_vm = [value, amp, period, m](double t, double x, double) {
        const double vv = value(t, x);
        const double dv = amp * std::sin(2.0 * M_PI * x) * 0.5 *
                          std::cos(2.0 * M_PI * t / period) * 2.0 * M_PI / period;
        return m * std::pow(std::abs(vv), m - 1.0) * dv;
    };
    return f;
}

ComparisonFunction ComparisonFunction::frozen_lifted_state(const Trajectory& traj, double lift) {
    ComparisonFunction f;
    f.name = "frozen_lifted_state";
    const TorusGrid grid = traj.config.grid;
    auto state = std::make_shared<Field>(traj.final_state());
    // lift above every obstacle value the run can see
    auto psi = traj.model.obstacle;
    auto lifted = std::make_shared<Field>(grid);
    const double T = traj.config.final_time;
    for (int p = 0; p < grid.total_points(); ++p) {
        const auto xy = grid.coords(p);
        double psup = -1e300;
        for (int j = 0; j <= 64; ++j)
            psup = std::max(psup, psi(T * j / 64.0, xy[0], xy[1]));
        (*lifted)[p] = std::max((*state)[p], psup) + lift;
    }
    f.v = [lifted, grid](double, double x, double y) {
        const int ix = static_cast<int>(std::lround(x * grid.points_per_dim));
        const int iy = static_cast<int>(std::lround(y * grid.points_per_dim));
        return (*lifted)[grid.index(ix, grid.dim == 2 ? iy : 0)];
    };
    f.dt_vm = [](double, double, double) { return 0.0; };
    return f;
}

ComparisonFunction ComparisonFunction::trajectory_interpolant(const Trajectory& traj) {
    ComparisonFunction f;
    f.name = "trajectory_interpolant";
    auto shared = std::make_shared<Trajectory>(traj);
    const TorusGrid grid = traj.config.grid;
    const double m = traj.model.m();

    // lift by the worst obstacle violation so the interpolant is admissible
    double worst = 0.0;
    for (int j = 0; j < traj.records(); ++j) {
        Field psi = traj.model.obstacle.sample(grid, traj.times[static_cast<size_t>(j)]);
        for (int p = 0; p < grid.total_points(); ++p)
            worst = std::max(worst, psi[p] - traj.states[static_cast<size_t>(j)][p]);
    }
    const double lift = worst + 1e-9;

    auto record_at = [shared](double t) {
        const auto& ts = shared->times;
        const auto it = std::lower_bound(ts.begin(), ts.end(), t - 1e-12);
        size_t j = static_cast<size_t>(std::distance(ts.begin(), it));
        if (j >= ts.size()) j = ts.size() - 1;
        return j;
    };
    f.v = [shared, grid, lift, record_at](double t, double x, double y) {
        const size_t j = record_at(t);
        const int ix = static_cast<int>(std::lround(x * grid.points_per_dim));
        const int iy = static_cast<int>(std::lround(y * grid.points_per_dim));
        return shared->states[j][grid.index(ix, grid.dim == 2 ? iy : 0)] + lift;
    };
    f.dt_vm = [shared, grid, lift, record_at, m](double t, double x, double y) {
        const size_t j = record_at(t);
        const size_t j2 = std::min(j + 1, shared->states.size() - 1);
        if (j2 == j) return 0.0;
        const int ix = static_cast<int>(std::lround(x * grid.points_per_dim));
        const int iy = static_cast<int>(std::lround(y * grid.points_per_dim));
        const int cell = grid.index(ix, grid.dim == 2 ? iy : 0);
        const double w = shared->times[j2] - shared->times[j];
        const double a = signed_power(shared->states[j][cell] + lift, m);
        const double b = signed_power(shared->states[j2][cell] + lift, m);
        return (b - a) / w;
    };
    return f;
}

std::vector<ComparisonFunction> registered_comparisons(const Trajectory& finest) {
    const Obstacle& psi = finest.model.obstacle;
    const double m = finest.model.m();
    double psi_sup = psi.sup_on(finest.config.grid, std::max(finest.config.final_time, 1e-9));
    std::vector<ComparisonFunction> out;
    out.push_back(ComparisonFunction::obstacle_plus_constant(psi, 0.1, m));
    out.push_back(ComparisonFunction::obstacle_plus_constant(psi, 0.5, m));
    out.push_back(ComparisonFunction::obstacle_plus_bump(psi, 0.2, 0.4, 0.25, 0.3, m));
    out.push_back(ComparisonFunction::modulated_sine(psi_sup + 0.8, 0.5,
                                                     std::max(finest.config.final_time, 1e-3), m));
    out.push_back(ComparisonFunction::frozen_lifted_state(finest, 0.05));
    return out;
}

// ---------------------------------------------------------------------------

double variational_inequality_check(const Trajectory& traj, const ComparisonFunction& cf,
                                    const TimeCutoff& phi_t) {
    if (!traj.deterministic())
        throw ConfigError("variational_inequality_check: requires a deterministic run");
    if (traj.config.level != 0)
        throw ConfigError("variational_inequality_check: requires the raw power-law flux");
    const TorusGrid& grid = traj.config.grid;
    const int total = grid.total_points();
    const double hvol = grid.cell_volume();
    const double m = traj.model.m();
    const int R = traj.records();

    // admissibility of the comparison function over the recorded grid
    for (int j = 0; j < R; ++j) {
        const double t = traj.times[static_cast<size_t>(j)];
        for (int p = 0; p < total; ++p) {
            const auto xy = grid.coords(p);
            if (cf.v(t, xy[0], xy[1]) < traj.model.obstacle(t, xy[0], xy[1]) - 1e-9)
                throw ConfigError("variational_inequality_check: comparison function dips below "
                                  "the obstacle");
        }
    }

    CompensatedSum time_part, grad_part;
    for (int j = 0; j + 1 < R; ++j) {
        const double t = traj.times[static_cast<size_t>(j)];
        const double w = traj.times[static_cast<size_t>(j + 1)] - t;
        const double ct = phi_t(t);
        const double dct = phi_t.derivative(t);
        const Field& u = traj.states[static_cast<size_t>(j)];

        Field U(grid), Vm(grid), Vdiff(grid);
        CompensatedSum cell_time;
        for (int p = 0; p < total; ++p) {
            const auto xy = grid.coords(p);
            const double vv = cf.v(t, xy[0], xy[1]);
            U[p] = signed_power(u[p], m);
            Vm[p] = signed_power(vv, m);
            Vdiff[p] = Vm[p] - U[p];
            const double psi_u = std::pow(std::abs(u[p]), m + 1.0) / (m + 1.0);
            cell_time.add(dct * (psi_u - u[p] * Vm[p]) -
                          ct * u[p] * cf.dt_vm(t, xy[0], xy[1]));
        }
        time_part.add(w * hvol * cell_time.value());

        VectorField gU = gradient(U);
        VectorField gD = gradient(Vdiff);
        CompensatedSum cell_grad;
        for (int i = 0; i < grid.dim; ++i)
            for (int p = 0; p < total; ++p)
                cell_grad.add(gU.component(i)[p] * gD.component(i)[p]);
        grad_part.add(w * hvol * ct * cell_grad.value());
    }

    // boundary term at t = 0
    CompensatedSum init;
    const Field& xi = traj.states.front();
    const double c0 = phi_t(0.0);
    for (int p = 0; p < total; ++p) {
        const auto xy = grid.coords(p);
        const double v0 = cf.v(0.0, xy[0], xy[1]);
        init.add(std::pow(std::abs(xi[p]), m + 1.0) / (m + 1.0) -
                 xi[p] * signed_power(v0, m));
    }

    return time_part.value() + hvol * c0 * init.value() + grad_part.value();
}

}  // namespace pmob
