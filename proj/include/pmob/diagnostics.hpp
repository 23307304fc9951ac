#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pmob/numerics.hpp"
#include "pmob/solver.hpp"

namespace pmob {

/// Convex test entropy eta_delta together with the space-time test function
/// phi(t, x) = phi_t(t) * profile(x) >= 0, phi(T, .) = 0.
///
/// The convex family is built from the canonical mollifier:
/// eta''(r) = rho_delta(|r|), eta(0) = eta'(0) = 0, which keeps eta within
/// delta of |r|. delta == 0 marks the linear limit cases eta(r) = sign * r.
class EntropyTestPack {
public:
    static EntropyTestPack convex(double delta, const TimeCutoff& cutoff, Field space_profile);
    static EntropyTestPack identity(double sign, const TimeCutoff& cutoff, Field space_profile);

    bool is_identity() const { return delta_ == 0.0; }
    double delta() const { return delta_; }

    double eta(double r) const;
    double eta_prime(double r) const;
    double eta_second(double r) const;

    const TimeCutoff& cutoff() const { return cutoff_; }
    const Field& profile() const { return profile_; }

    /// Same entropy, profile scaled by lambda (residuals are linear in phi).
    EntropyTestPack scaled(double lambda) const;

private:
    EntropyTestPack(double delta, double sign, const TimeCutoff& cutoff, Field profile);
    double delta_ = 0.1;
    double sign_ = 1.0;  // identity packs only
    TimeCutoff cutoff_;
    Field profile_;
};

/// Term-by-term evaluation of the entropy inequality for one run;
/// total = LHS - RHS, so nonpositive values satisfy the inequality.
struct EntropyResidual {
    double total = 0.0;
    double time_term = 0.0;        // -sum eta(u) d_t phi
    double measure_term = 0.0;     // -<eta'(psi) phi, nu>
    double initial_term = 0.0;     // int eta(xi) phi(0)
    double diffusion_term = 0.0;   // [[phi' eta']] against the compact laplacian of phi
    double ito_second_term = 0.0;  // [[a eta']] against d_i d_j phi
    double ito_first_term = 0.0;   // gradient-paired correction terms
    double zero_order_term = 0.0;  // phi-paired b- and f-terms
    double convexity_term = 0.0;   // eta'' (sigma_x^2 - |grad [[sqrt phi']](u)|^2)
    double stochastic_term = 0.0;  // left-point pairing with the recorded increments
};

EntropyResidual entropy_residual(const Trajectory& traj, const CompensationMeasure& nu,
                                 const EntropyTestPack& pack);

/// |<u - psi, nu>|; equals eps^{-1} ||(u-psi)^-||^2_{L2} over the recorded
/// quadrature by construction of the discrete measure.
double skorohod_defect(const Trajectory& traj, const CompensationMeasure& nu);

struct ReportEntry {
    std::string name;
    double value = 0.0;
    std::optional<double> tolerance;  // pass iff value <= tolerance when set
    bool pass = true;
};

struct DiagnosticsReport {
    std::string config_fingerprint;
    std::vector<ReportEntry> entries;

    void add(const std::string& name, double value);
    void add_checked(const std::string& name, double value, double tolerance);
    const ReportEntry* find(const std::string& name) const;
    bool all_pass() const;
    bool all_finite() const;
    void write_csv(std::ostream& out) const;
    std::string to_json() const;
};

/// The uniform-in-eps energy monitors, read off the per-step accumulators.
DiagnosticsReport apriori_monitor(const Trajectory& traj);

/// Short fingerprint of (config, model, seed) embedded in artifacts.
std::string config_fingerprint(const Trajectory& traj);

struct StabilitySeries {
    std::vector<double> times;
    std::vector<double> distance;  // L1 distance per recorded time (ensemble mean)
    double initial_distance = 0.0;
    double ratio = 0.0;  // sup_t distance / initial_distance (0 when identical data)
};

/// L1 stability of a coupled pair: same config, same noise path, different
/// initial data. Throws ConfigError when the runs are not coupled.
StabilitySeries l1_stability(const Trajectory& a, const Trajectory& b);

/// Ensemble-mean version over member pairs (a[i], b[i]).
StabilitySeries l1_stability_mean(const std::vector<Trajectory>& a,
                                  const std::vector<Trajectory>& b);

/// A(tau) = (1/tau) int_0^tau ||u(t) - xi||^2_{L2} dt on the recorded grid;
/// taus must be multiples of dt within (0, T].
std::vector<double> initial_attainment(const Trajectory& traj, const Field& xi,
                                       const std::vector<double>& taus);

}  // namespace pmob
