#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pmob/grid.hpp"
#include "pmob/model.hpp"
#include "pmob/sde.hpp"

namespace pmob {

struct IntegrationError : std::runtime_error {
    IntegrationError(const std::string& what, long step_, int cell_)
        : std::runtime_error(what), step(step_), cell(cell_) {}
    long step;
    int cell;
};

enum class Scheme { Explicit, SemiImplicitDiffusion };

struct SolverConfig {
    TorusGrid grid{1, 64};
    double final_time = 0.5;
    double dt = 1e-4;
    double eps = 1e-3;      // penalty parameter
    int level = 1;          // flux smoothing / initial-data truncation; 0 = raw power law
    double cfl_safety = 0.9;
    Scheme scheme = Scheme::Explicit;
    int record_stride = 1;
    double coeff_range = 0.0;  // r-window for coefficient bounds; 0 = derive from data
    double cg_rel_tol = 1e-12;

    long steps() const;
    /// Explicit-scheme stability bound on dt for this model and r-window.
    static double stable_dt(const ModelSpec& model, const TorusGrid& grid, double r_window,
                            double cfl_safety);
    /// Largest dt <= stable bound such that final_time/dt is an integer.
    static double fitted_dt(double final_time, double bound);
    void validate(const ModelSpec& model, double r_window) const;
};

/// Per-run scalar integrals accumulated at every step (independent of the
/// recording stride). Time quadrature uses the post-update state.
struct RunningStats {
    double max_mass_residual_rel = 0.0;   // mass identity defect / ||u||_L2
    double min_penalty_increment = 0.0;   // most negative applied increment (>= 0 expected)
    double max_contraction_excess = 0.0;  // violation beyond eps/(dt+eps) * pre-violation
    double sup_l2_sq = 0.0;               // sup_t ||u||_L2^2
    double sup_lmp1 = 0.0;                // sup_t ||u||_{m+1}^{m+1}
    double penalty_l2_qt_sq = 0.0;        // int ||(u-psi)^-||_L2^2 dt
    double penalty_l1_qt = 0.0;           // int ||(u-psi)^-||_L1 dt
    double grad_bracket_sqrt_qt = 0.0;    // int ||grad [[sqrt(phi')]](u)||_L2^2 dt
    double grad_phi_qt = 0.0;             // int ||grad phi(u)||_L2^2 dt
    double weighted_violation_qt = 0.0;   // int ((u-psi)^-)^2 |u|^{m-1} dx dt
};

/// Time-indexed record of one run: states and penalty fields at the recorded
/// instants, the noise spec for exact replay, and the running integrals.
struct Trajectory {
    SolverConfig config;
    ModelSpec model;
    NoisePathSpec noise_spec;

    std::vector<double> times;        // recorded instants, times[0] == 0
    std::vector<long> step_index;     // global step of each record
    std::vector<Field> states;        // u at recorded instants; states[0] = truncated ic
    std::vector<Field> penalty_fields;  // nu_eps at recorded instants (zeros at t=0)
    RunningStats stats;

    int records() const { return static_cast<int>(times.size()); }
    /// Quadrature weight of record j: times[j] - times[j-1] (0 for j == 0).
    double record_weight(int j) const { return j == 0 ? 0.0 : times[j] - times[j - 1]; }
    const Field& initial_state() const { return states.front(); }
    const Field& final_state() const { return states.back(); }
    bool deterministic() const { return noise_spec.mode_count == 0; }
};

/// Discrete Radon measure induced by the recorded penalty fields: one atom of
/// weight w_j * h^d * nu_j(p) per recorded space-time cell.
class CompensationMeasure {
public:
    explicit CompensationMeasure(const Trajectory& traj);

    double total_mass() const { return total_mass_; }
    int records() const { return static_cast<int>(times_.size()); }
    double time(int j) const { return times_[j]; }
    double weight(int j) const { return weights_[j]; }
    const Field& density(int j) const { return densities_[j]; }
    const TorusGrid& grid() const { return grid_; }

    /// Pairing with a continuous integrand g(t, x, y).
    double pair(const std::function<double(double, double, double)>& g) const;
    /// Pairing with per-record cell values g(record j, cell p).
    double pair_cells(const std::function<double(int, int)>& g) const;

private:
    TorusGrid grid_;
    std::vector<double> times_;    // record times (j >= 1 carry mass)
    std::vector<double> weights_;  // time-quadrature weights
    std::vector<Field> densities_;
    double total_mass_ = 0.0;
};

/// One Euler-Maruyama step with the exact pointwise-implicit penalty
/// sub-step; exposed for direct testing. dW holds one increment per mode.
Field step(const Field& u, double t, std::span<const double> dW, const SolverConfig& cfg,
           const ModelSpec& model);

Trajectory solve(const SolverConfig& cfg, const ModelSpec& model, const Field& ic,
                 const NoisePathSpec& noise);

CompensationMeasure compensation_measure(const Trajectory& traj);

struct EpsilonRefinement {
    std::vector<Trajectory> trajectories;     // one per schedule entry
    std::vector<double> epsilons;
    std::vector<double> max_order_violation;  // max(u_prev - u_next) per consecutive pair
    std::vector<double> penalty_l2_qt;        // ||(u_eps - psi)^-||_L2(Q_T) per entry
};

/// Solves once per epsilon in the (strictly decreasing) schedule, all runs
/// driven by the same noise path, and reports the monotonicity defects.
EpsilonRefinement refine_epsilon(const SolverConfig& cfg, const ModelSpec& model, const Field& ic,
                                 const NoisePathSpec& noise, const std::vector<double>& schedule);

/// r-window used for coefficient bounds when cfg.coeff_range == 0: smoothed
/// fluxes use the clamp edge (global bound); raw fluxes use a growth estimate
/// from the data ranges.
double default_coeff_range(const SolverConfig& cfg, const ModelSpec& model, const Field& ic);

}  // namespace pmob
