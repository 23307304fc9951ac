#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pmob/diagnostics.hpp"
#include "pmob/solver.hpp"

namespace pmob {

struct OracleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Self-similar source solution of the unconstrained porous medium flow,
/// used as an exact oracle. Valid only while its support fits strictly
/// inside one period of the torus.
struct BarenblattParams {
    double m = 2.0;
    int dim = 1;
    double mass = 0.165;
    double t0 = 0.015;  // time offset: the profile at solver time t is the
                        // free-space solution at age t + t0
    double center_x = 0.5;
    double center_y = 0.5;

    double alpha() const { return dim / (dim * (m - 1.0) + 2.0); }
    double beta() const { return 1.0 / (dim * (m - 1.0) + 2.0); }
    double k() const { return (m - 1.0) * beta() / (2.0 * m); }
    /// Profile constant determined by the mass (closed form via Beta/Gamma).
    double profile_constant() const;
    double support_radius(double t) const;
    double peak_value(double t) const;
};

/// Profile value at solver time t; throws OracleError once the support
/// radius reaches half a period.
double barenblatt(double x, double y, double t, const BarenblattParams& p);
Field barenblatt_field(const TorusGrid& g, double t, const BarenblattParams& p);

struct ConvergenceStudy {
    std::vector<int> grid_sizes;
    std::vector<double> errors;      // L1 distance to the oracle at T
    std::vector<double> spacings;
    double fitted_order = 0.0;       // least-squares slope of log err vs log h
    bool monotone = true;            // errors strictly decreasing (flag, not error)
};

/// Runs the deterministic unconstrained flow from the oracle's initial
/// profile on each grid and fits the L1 convergence order.
ConvergenceStudy convergence_study(const BarenblattParams& p, const std::vector<int>& grid_sizes,
                                   double final_time, double cfl_safety = 0.9,
                                   Scheme scheme = Scheme::Explicit);

/// Admissible comparison function for the variational inequality: carries
/// the evaluator v(t, x) >= psi and the analytic time derivative of
/// |v|^{m-1} v.
struct ComparisonFunction {
    std::string name;
    std::function<double(double, double, double)> v;
    std::function<double(double, double, double)> dt_vm;

    static ComparisonFunction obstacle_plus_constant(const Obstacle& psi, double c, double m);
    static ComparisonFunction obstacle_plus_bump(const Obstacle& psi, double c, double amp,
                                                 double center, double width, double m);
    static ComparisonFunction modulated_sine(double base, double amp, double period, double m);
    static ComparisonFunction frozen_lifted_state(const Trajectory& traj, double lift);
    /// The run itself, lifted just above its own obstacle violations; the
    /// self-test whose value calibrates the pass tolerance.
    static ComparisonFunction trajectory_interpolant(const Trajectory& traj);
};

/// Five admissible comparison functions built against the run's obstacle.
std::vector<ComparisonFunction> registered_comparisons(const Trajectory& finest);

/// Discrete evaluation of the variational pairing; nonnegative (up to
/// discretization) for entropy-constructed runs. Requires a deterministic
/// raw-power-law run and phi_t >= 0 with phi_t(T) = 0.
double variational_inequality_check(const Trajectory& traj, const ComparisonFunction& v,
                                    const TimeCutoff& phi_t);

}  // namespace pmob
