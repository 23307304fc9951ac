#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pmob/grid.hpp"

namespace pmob {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Power-law nonlinearity of porous-medium type: phi(r) = |r|^{m-1} r with
/// m > 1. Oddness is structural (copysign), never a rounding question.
struct Nonlinearity {
    double m = 2.0;                // exponent, > 1
    double structure_constant = 3.0;  // K >= 1 shared by the coefficient bounds
    double holder_exponent = 1.0;  // kappa in (0, 1]

    Nonlinearity() = default;
    Nonlinearity(double m_, double K, double kappa = 1.0);

    double phi(double r) const;
    double phi_prime(double r) const;       // m |r|^{m-1}
    double sqrt_phi_prime(double r) const;  // sqrt(m) |r|^{(m-1)/2}
    double bracket_sqrt(double r) const;    // integral of sqrt_phi_prime from 0 to r
};

/// Smooth strictly increasing replacement for the power law at level n:
///
///   sqrt(phi_n')(r) = 2/n + mollify_delta( sqrt(phi') (clamped, capped) )(r)
///
/// with a symmetric mollification kernel built from the canonical bump, the
/// clamp freezing the coefficient outside [-(n+1), n+1], and the cap placed
/// above the clamped maximum so it never binds on the working range. The
/// mollification scale delta is reduced until the sampled deviation from
/// sqrt(phi') on [-n, n] stays below 1.5/n, so that the total deviation
/// (floor + smoothing) remains below 4/n with margin. phi_n itself is the
/// exact antiderivative of the squared construction, tabulated once on a
/// fine symmetric grid; values are odd by construction.
class SmoothedNonlinearity {
public:
    SmoothedNonlinearity(const Nonlinearity& base, int level);

    const Nonlinearity& base() const { return base_; }
    int level() const { return level_; }
    double floor() const { return floor_; }              // 2/n
    double mollification_scale() const { return delta_; }

    // Direct pointwise evaluation of the defining construction.
    double sqrt_phi_prime(double r) const;
    double phi_prime(double r) const { return square(sqrt_phi_prime(r)); }

    // Tabulated antiderivatives (built lazily, consistent with phi_prime to
    // interpolation accuracy, strictly increasing by construction).
    double phi(double r) const;
    double bracket_sqrt(double r) const;

    /// Global bound on phi_n' (attained where the clamped coefficient is
    /// largest); used by the CFL check.
    double phi_prime_max() const;

private:
    static double square(double x) { return x * x; }
    double capped_base(double r) const;  // sqrt(phi') after clamp and cap
    void build_tables() const;

    Nonlinearity base_;
    int level_;
    double floor_;
    double delta_;
    double clamp_radius_;  // n + 1
    double cap_;           // above max of clamped sqrt(phi')

    // symmetric kernel: offsets in (0,1), weights summing to 1
    std::vector<double> kern_off_, kern_w_;

    mutable std::once_flag tables_once_;
    mutable std::vector<double> tab_phi_, tab_bracket_, tab_dphi_;
    mutable double tab_step_ = 0.0;
    mutable double tab_rmax_ = 0.0;
};

/// Either the raw power law or its level-n smoothing; the solver integrates
/// whichever the model carries. level == 0 means the raw power law.
class FluxFunction {
public:
    FluxFunction() : FluxFunction(Nonlinearity{}, 0) {}
    FluxFunction(const Nonlinearity& base, int level);

    int level() const { return level_; }
    const Nonlinearity& base() const { return base_; }
    const SmoothedNonlinearity* smoothed() const { return smoothed_.get(); }

    double phi(double r) const { return smoothed_ ? smoothed_->phi(r) : base_.phi(r); }
    double phi_prime(double r) const {
        return smoothed_ ? smoothed_->phi_prime(r) : base_.phi_prime(r);
    }
    double sqrt_phi_prime(double r) const {
        return smoothed_ ? smoothed_->sqrt_phi_prime(r) : base_.sqrt_phi_prime(r);
    }
    double bracket_sqrt(double r) const {
        return smoothed_ ? smoothed_->bracket_sqrt(r) : base_.bracket_sqrt(r);
    }
    /// Max of phi' over |r| <= r_range (smoothed fluxes are globally bounded).
    double phi_prime_bound(double r_range) const;

private:
    Nonlinearity base_;
    int level_ = 0;
    std::shared_ptr<const SmoothedNonlinearity> smoothed_;
};

enum class ObstacleSmoothness { HolderX, C2X };

/// Lower barrier psi(t, x). Families cover constant, smooth space bumps and
/// the Hoelder-in-time ramp used by the penalty-scaling experiments.
class Obstacle {
public:
    /// No obstacle: a constant far below any trajectory (-1e9).
    static Obstacle none();
    static Obstacle constant(double c);
    /// base + amp * cos^2(pi (x-cx)/width) bump (time-independent, C^2 in x).
    static Obstacle bump(double base, double amp, double center, double width);
    /// base + amp * ((t - t0)_+)^alpha * cos^2 bump(x): continuous, Hoelder-
    /// alpha in time at t0. Drives a genuinely singular contact layer.
    static Obstacle ramp_bump(double base, double amp, double t0, double alpha, double center,
                              double width);
    /// Same Hoelder ramp over a flat-top profile: constant on |x-c| <= w_flat,
    /// quartic decay to zero at w_out.
    static Obstacle ramp_plateau(double base, double amp, double t0, double alpha, double center,
                                 double w_flat, double w_out);
    /// base + amp * sin(2 pi (x - speed t)) traveling profile (smooth).
    static Obstacle moving_sine(double base, double amp, double speed);

    static Obstacle from_config(const std::string& family, const std::vector<double>& params);

    double operator()(double t, double x, double y = 0.0) const { return eval_(t, x, y); }
    Field sample(const TorusGrid& g, double t) const;
    bool is_none() const { return none_; }
    bool time_independent() const {
        return family_ == "none" || family_ == "constant" || family_ == "bump";
    }
    ObstacleSmoothness smoothness() const { return smoothness_; }
    const std::string& family() const { return family_; }
    const std::vector<double>& params() const { return params_; }

    /// Max over the grid of psi(t, .) for t scanned on [0, T] (CFL range aid).
    double sup_on(const TorusGrid& g, double T, int time_samples = 65) const;

private:
    Obstacle() = default;
    std::function<double(double, double, double)> eval_;
    ObstacleSmoothness smoothness_ = ObstacleSmoothness::C2X;
    bool none_ = false;
    std::string family_;
    std::vector<double> params_;
};

/// Reaction term f(t, x, r), Lipschitz in r with known bound.
class Reaction {
public:
    static Reaction none();
    static Reaction constant(double c);
    static Reaction sine(double lambda);                     // lambda * sin(r)
    static Reaction damping(double lambda);                  // -lambda * r
    static Reaction sine_with_source(double lambda, double s0);  // lambda sin(r) + s0 cos(2 pi x)
    static Reaction sine_plus_constant(double lambda, double c);  // lambda sin(r) + c
    static Reaction from_config(const std::string& family, const std::vector<double>& params);

    double operator()(double t, double x, double y, double r) const { return eval_(t, x, y, r); }
    double lipschitz_bound() const { return lipschitz_; }
    bool is_none() const { return none_; }
    const std::string& family() const { return family_; }
    const std::vector<double>& params() const { return params_; }

private:
    Reaction() = default;
    std::function<double(double, double, double, double)> eval_;
    double lipschitz_ = 0.0;
    bool none_ = false;
    std::string family_;
    std::vector<double> params_;
};

/// One noise mode: sigma^{i}(x, r) = amp * s(r) * w^i(x) with
/// w^i(x) = dir[i] * cos(2 pi wave.x + phase). All partial derivatives are
/// supplied in closed form; s comes from a small registry of C^3 profiles.
struct NoiseMode {
    enum class Profile { One, Linear, Sine, Tanh };

    double amp = 0.0;
    Profile profile = Profile::One;
    std::array<double, 2> dir = {1.0, 0.0};
    std::array<int, 2> wave = {0, 0};
    double phase = 0.0;

    double s(double r) const;
    double s_r(double r) const;
    double s_rr(double r) const;
    double s_sup(double r_window) const;    // sup |s| over |r| <= r_window
    double s_r_sup(double r_window) const;  // sup |s'| over |r| <= r_window

    double w(int i, double x, double y) const;       // w^i(x)
    double w_x(int i, int j, double x, double y) const;   // d_j w^i
    double w_xx(int i, int j, int l, double x, double y) const;  // d_j d_l w^i
};

/// Finitely many modes of conservative gradient noise with the Ito
/// correction coefficients of the Stratonovich-to-Ito rewrite:
///   a^{ij} = 1/2 sum_k sigma_r^{ik} sigma_r^{jk},
///   b^i    = 1/2 sum_k sigma_r^{ik} sigma_{x_j}^{jk}.
class NoiseModel {
public:
    NoiseModel() = default;
    explicit NoiseModel(std::vector<NoiseMode> modes) : modes_(std::move(modes)) {}

    static NoiseModel none() { return NoiseModel(); }
    static NoiseModel from_config(const std::string& family, const std::vector<double>& params,
                                  int modes, int dim);

    int mode_count() const { return static_cast<int>(modes_.size()); }
    const std::vector<NoiseMode>& modes() const { return modes_; }

    double sigma(int i, int k, double x, double y, double r) const;
    double sigma_r(int i, int k, double x, double y, double r) const;
    double sigma_x(int i, int k, int j, double x, double y, double r) const;
    double sigma_rx(int i, int k, int j, double x, double y, double r) const;

    void ito_coefficients(int dim, double x, double y, double r, double a[2][2],
                          double b[2]) const;

    /// sup over grid x and |r| <= r_window of the largest a^{ii}.
    double max_a_bound(const TorusGrid& g, double r_window) const;
    /// Sampled proxy for sum_k ||sigma^k||_{C^3}^2 over x in grid, |r| <= window.
    double c3_budget_sample(const TorusGrid& g, double r_window) const;

private:
    std::vector<NoiseMode> modes_;
};

/// The full coefficient tuple of one problem instance.
struct ModelSpec {
    FluxFunction flux;
    Obstacle obstacle = Obstacle::none();
    Reaction reaction = Reaction::none();
    NoiseModel noise;

    double m() const { return flux.base().m; }
    double K() const { return flux.base().structure_constant; }
};

/// Penalty P(r, b) = (r - b)^- / eps with (x)^- = max(-x, 0); pushes upward.
inline double penalty(double r, double b, double eps) {
    if (eps <= 0.0) throw ConfigError("penalty: eps must be positive");
    return std::max(b - r, 0.0) / eps;
}

/// integral of g over [0, r] (sign convention: negative r integrates
/// backwards), adaptive quadrature with absolute tolerance tol.
double bracket(const std::function<double(double)>& g, double r, double tol = 1e-10);

// ---------------------------------------------------------------------------
// Assumption validation

struct CheckResult {
    std::string name;
    bool pass = true;
    double worst_margin = 0.0;  // most negative margin seen (bound - value)
    std::string witness;        // where the worst case occurred
};

struct AssumptionReport {
    std::vector<CheckResult> checks;
    bool all_pass() const;
    std::string to_string() const;
};

/// Scalar nonlinearity probe for the structural checks; lets tests feed
/// deliberately broken functions through the same machinery.
struct PhiProbe {
    std::function<double(double)> phi;
    std::function<double(double)> sqrt_phi_prime;
    double m = 2.0;
    double K = 3.0;

    static PhiProbe from(const Nonlinearity& nl);
};

AssumptionReport validate_phi(const PhiProbe& probe, int sample_budget, std::uint64_t seed = 101);
AssumptionReport validate_assumptions(const ModelSpec& model, int sample_budget,
                                      std::uint64_t seed = 101);

}  // namespace pmob
