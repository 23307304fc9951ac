#include "pmob/solver.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>

#include "pmob/numerics.hpp"

namespace pmob {

long SolverConfig::steps() const {
    if (final_time == 0.0) return 0;
    const double raw = final_time / dt;
    const long n = std::lround(raw);
    if (n < 1 || std::abs(raw - static_cast<double>(n)) > 1e-6 * std::max(1.0, raw))
        throw ConfigError("SolverConfig: final_time must be an integer multiple of dt");
    return n;
}

double SolverConfig::stable_dt(const ModelSpec& model, const TorusGrid& grid, double r_window,
                               double cfl_safety) {
    const double h = grid.spacing();
    const double diff = model.flux.phi_prime_bound(r_window);
    const double a_max = model.noise.max_a_bound(grid, r_window);
    const double denom = 2.0 * grid.dim * diff + grid.dim * a_max;
    if (denom <= 0.0) return cfl_safety * h * h;  // pure reaction, no diffusion scale
    return cfl_safety * h * h / denom;
}

double SolverConfig::fitted_dt(double final_time, double bound) {
    const long n = static_cast<long>(std::ceil(final_time / bound));
    return final_time / static_cast<double>(std::max<long>(n, 1));
}

void SolverConfig::validate(const ModelSpec& model, double r_window) const {
    if (final_time < 0.0) throw ConfigError("SolverConfig: final_time must be >= 0");
    if (final_time > 0.0 && dt <= 0.0) throw ConfigError("SolverConfig: dt must be positive");
    if (eps <= 0.0) throw ConfigError("SolverConfig: eps must be positive");
    if (level < 0) throw ConfigError("SolverConfig: level must be >= 0");
    if (cfl_safety <= 0.0 || cfl_safety >= 1.0)
        throw ConfigError("SolverConfig: cfl_safety must lie in (0, 1)");
    if (record_stride < 1) throw ConfigError("SolverConfig: record_stride must be >= 1");
    if (final_time > 0.0) steps();  // integer-step check
    if (scheme == Scheme::Explicit && final_time > 0.0) {
        const double bound = stable_dt(model, grid, r_window, cfl_safety);
        if (dt > bound * (1.0 + 1e-12)) {
            throw ConfigError("SolverConfig: explicit scheme violates the CFL bound, dt <= " +
                              std::to_string(bound) + " required");
        }
    }
}

double default_coeff_range(const SolverConfig& cfg, const ModelSpec& model, const Field& ic) {
    if (cfg.coeff_range > 0.0) return cfg.coeff_range;
    if (model.flux.smoothed()) {
        // globally bounded coefficients: use the clamp edge
        return static_cast<double>(cfg.level) + 2.0;
    }
    const double psi_sup = model.obstacle.is_none()
                               ? -1e300
                               : model.obstacle.sup_on(cfg.grid, std::max(cfg.final_time, 1e-12));
    double base = std::max(max_abs(ic), std::max(psi_sup, 0.0));
    const double growth = std::exp(model.reaction.lipschitz_bound() * cfg.final_time);
    double f0 = 0.0;
    if (!model.reaction.is_none()) {
        for (int p = 0; p < cfg.grid.total_points(); ++p) {
            const auto xy = cfg.grid.coords(p);
            f0 = std::max(f0, std::abs(model.reaction(0.0, xy[0], xy[1], 0.0)));
        }
    }
    return 1.2 * growth * (base + cfg.final_time * f0) + 0.5;
}

// ---------------------------------------------------------------------------
// Circulant-preconditioned CG for the semi-implicit diffusion solve

namespace {

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

/// Applies (mean_winv * I - dt * Lap_h)^{-1} through the FFT diagonalization
/// of the compact periodic Laplacian.
class CirculantPreconditioner {
public:
    CirculantPreconditioner(const TorusGrid& g, double dt) : grid_(g), dt_(dt) {
        const int n = g.points_per_dim;
        const int total = g.total_points();
        in_ = fftw_alloc_real(static_cast<size_t>(total));
        const int spec = g.dim == 1 ? n / 2 + 1 : n * (n / 2 + 1);
        out_ = fftw_alloc_complex(static_cast<size_t>(spec));
        {
            std::lock_guard<std::mutex> lock(fftw_mutex());
            if (g.dim == 1) {
                fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
            } else {
                fwd_ = fftw_plan_dft_r2c_2d(n, n, in_, out_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_2d(n, n, out_, in_, FFTW_ESTIMATE);
            }
        }
        const double h = g.spacing();
        const double c = 4.0 / (h * h);
        eig_.resize(static_cast<size_t>(spec));
        if (g.dim == 1) {
            for (int k = 0; k <= n / 2; ++k) {
                const double s = std::sin(M_PI * k / n);
                eig_[static_cast<size_t>(k)] = c * s * s;
            }
        } else {
            for (int kx = 0; kx < n; ++kx) {
                const double sx = std::sin(M_PI * kx / n);
                for (int ky = 0; ky <= n / 2; ++ky) {
                    const double sy = std::sin(M_PI * ky / n);
                    eig_[static_cast<size_t>(kx * (n / 2 + 1) + ky)] = c * (sx * sx + sy * sy);
                }
            }
        }
    }

    ~CirculantPreconditioner() {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(in_);
        fftw_free(out_);
    }

    CirculantPreconditioner(const CirculantPreconditioner&) = delete;
    CirculantPreconditioner& operator=(const CirculantPreconditioner&) = delete;

    void set_shift(double mean_winv) { shift_ = mean_winv; }

    void apply(const std::vector<double>& r, std::vector<double>& z) {
        const int total = grid_.total_points();
        std::memcpy(in_, r.data(), sizeof(double) * static_cast<size_t>(total));
        fftw_execute(fwd_);
        for (size_t k = 0; k < eig_.size(); ++k) {
            const double d = (shift_ + dt_ * eig_[k]) * total;
            out_[k][0] /= d;
            out_[k][1] /= d;
        }
        fftw_execute(bwd_);
        std::memcpy(z.data(), in_, sizeof(double) * static_cast<size_t>(total));
    }

private:
    TorusGrid grid_;
    double dt_;
    double shift_ = 1.0;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
    std::vector<double> eig_;
};

// ---------------------------------------------------------------------------
// Stepper: holds per-run precomputation and scratch buffers

struct StepStats {
    double mean_before = 0.0;
    double mean_after = 0.0;
    double mean_forcing_dt = 0.0;  // dt * mean(f) + mean(penalty increment)
    double min_penalty_increment = 0.0;
    double contraction_excess = 0.0;
};

class Stepper {
public:
    Stepper(const SolverConfig& cfg, const ModelSpec& model)
        : cfg_(cfg), model_(model), grid_(cfg.grid) {
        const int total = grid_.total_points();
        const int modes = model.noise.mode_count();
        // x-factors of every noise mode, frozen on the grid
        wmode_.assign(static_cast<size_t>(modes), VectorField(grid_));
        divw_.assign(static_cast<size_t>(modes), Field(grid_));
        for (int k = 0; k < modes; ++k) {
            const NoiseMode& m = model.noise.modes()[static_cast<size_t>(k)];
            for (int p = 0; p < total; ++p) {
                const auto xy = grid_.coords(p);
                double dv = 0.0;
                for (int i = 0; i < grid_.dim; ++i) {
                    wmode_[static_cast<size_t>(k)].component(i)[p] = m.w(i, xy[0], xy[1]);
                    dv += m.w_x(i, i, xy[0], xy[1]);
                }
                divw_[static_cast<size_t>(k)][p] = dv;
            }
        }
        if (cfg.scheme == Scheme::SemiImplicitDiffusion) {
            precond_ = std::make_unique<CirculantPreconditioner>(grid_, cfg.dt);
        }
    }

    /// Advances u in place over [t, t+dt]; psi_next is the obstacle at t+dt.
    /// nu_out receives the recorded penalty density of this step.
    StepStats advance(Field& u, double t, std::span<const double> dW, const Field& psi_next,
                      Field& nu_out, long step_index) {
        const int total = grid_.total_points();
        const double dt = cfg_.dt;
        StepStats st;
        st.mean_before = mean(u);

        Field drift = drift_field(u, t);
        Field ustar(grid_);
        if (cfg_.scheme == Scheme::Explicit) {
            for (int p = 0; p < total; ++p) ustar[p] = u[p] + dt * drift[p];
        } else {
            semi_implicit_update(u, drift, ustar);
        }
        // conservative noise, one centered divergence per mode
        for (int k = 0; k < model_.noise.mode_count(); ++k) {
            const NoiseMode& m = model_.noise.modes()[static_cast<size_t>(k)];
            VectorField sig(grid_);
            for (int p = 0; p < total; ++p) {
                const double sv = m.amp * m.s(u[p]);
                for (int i = 0; i < grid_.dim; ++i)
                    sig.component(i)[p] = sv * wmode_[static_cast<size_t>(k)].component(i)[p];
            }
            Field dsig = divergence(sig);
            const double dw = dW[static_cast<size_t>(k)];
            for (int p = 0; p < total; ++p) ustar[p] += dsig[p] * dw;
        }

        // exact pointwise-implicit penalty sub-step against psi(t+dt)
        const double lam = dt / cfg_.eps;
        CompensatedSum forcing;
        double fmean_dt = dt * mean_reaction_dt_;  // filled by drift_field
        st.min_penalty_increment = 0.0;
        st.contraction_excess = 0.0;
        for (int p = 0; p < total; ++p) {
            const double psi = psi_next[p];
            double nu = 0.0;
            double unew = ustar[p];
            if (unew < psi) {
                const double pre_violation = psi - unew;
                const double blended = (unew + lam * psi) / (1.0 + lam);
                nu = std::max(psi - blended, 0.0) / cfg_.eps;
                unew = unew + dt * nu;
                const double allowed = pre_violation * cfg_.eps / (dt + cfg_.eps);
                st.contraction_excess =
                    std::max(st.contraction_excess, std::max(psi - unew, 0.0) - allowed * (1.0 + 1e-12));
            }
            st.min_penalty_increment = std::min(st.min_penalty_increment, dt * nu);
            nu_out[p] = nu;
            forcing.add(dt * nu);
            if (!std::isfinite(unew))
                throw IntegrationError("nonfinite state produced", step_index, p);
            u[p] = unew;
        }
        st.mean_forcing_dt = fmean_dt + forcing.value() / total;
        st.mean_after = mean(u);
        return st;
    }

private:
    Field drift_field(const Field& u, double t) {
        const int total = grid_.total_points();
        Field phi_u(grid_);
        for (int p = 0; p < total; ++p) phi_u[p] = model_.flux.phi(u[p]);
        Field drift = laplacian(phi_u);

        const int modes = model_.noise.mode_count();
        const bool has_ito = [&] {
            for (const auto& m : model_.noise.modes())
                if (m.profile != NoiseMode::Profile::One) return true;
            return false;
        }();
        if (has_ito && modes > 0) {
            VectorField gu = gradient(u);
            VectorField flux(grid_);
            std::vector<double> sr(static_cast<size_t>(modes)), sval(static_cast<size_t>(modes));
            for (int p = 0; p < total; ++p) {
                for (int k = 0; k < modes; ++k) {
                    const NoiseMode& m = model_.noise.modes()[static_cast<size_t>(k)];
                    sr[static_cast<size_t>(k)] = m.amp * m.s_r(u[p]);
                    sval[static_cast<size_t>(k)] = m.amp * m.s(u[p]);
                }
                for (int i = 0; i < grid_.dim; ++i) {
                    double Fi = 0.0;
                    for (int k = 0; k < modes; ++k) {
                        const double sri =
                            sr[static_cast<size_t>(k)] * wmode_[static_cast<size_t>(k)].component(i)[p];
                        // a^{ij} grad_j u
                        for (int j = 0; j < grid_.dim; ++j) {
                            const double srj =
                                sr[static_cast<size_t>(k)] * wmode_[static_cast<size_t>(k)].component(j)[p];
                            Fi += 0.5 * sri * srj * gu.component(j)[p];
                        }
                        // b^i
                        Fi += 0.5 * sri * sval[static_cast<size_t>(k)] * divw_[static_cast<size_t>(k)][p];
                    }
                    flux.component(i)[p] = Fi;
                }
            }
            Field divflux = divergence(flux);
            for (int p = 0; p < total; ++p) drift[p] += divflux[p];
        }

        mean_reaction_dt_ = 0.0;
        if (!model_.reaction.is_none()) {
            CompensatedSum fsum;
            for (int p = 0; p < total; ++p) {
                const auto xy = grid_.coords(p);
                const double fv = model_.reaction(t, xy[0], xy[1], u[p]);
                drift[p] += fv;
                fsum.add(fv);
            }
            mean_reaction_dt_ = fsum.value() / total;
        }
        return drift;
    }

    /// (I - dt Lap diag(phi'(u))) delta = dt * drift; transformed to the SPD
    /// system (W^{-1} - dt Lap) v = dt * drift with v = W delta.
    void semi_implicit_update(const Field& u, const Field& drift, Field& ustar) {
        const int total = grid_.total_points();
        const double dt = cfg_.dt;
        std::vector<double> winv(static_cast<size_t>(total));
        double winv_mean = 0.0;
        for (int p = 0; p < total; ++p) {
            const double w = std::max(model_.flux.phi_prime(u[p]), 1e-14);
            winv[static_cast<size_t>(p)] = 1.0 / w;
            winv_mean += winv[static_cast<size_t>(p)];
        }
        winv_mean /= total;
        precond_->set_shift(winv_mean);

        std::vector<double> rhs(static_cast<size_t>(total));
        for (int p = 0; p < total; ++p) rhs[static_cast<size_t>(p)] = dt * drift[p];

        auto apply_A = [&](const std::vector<double>& v, std::vector<double>& out) {
            Field vf(grid_, v);
            Field lap = laplacian(vf);
            for (int p = 0; p < total; ++p)
                out[static_cast<size_t>(p)] =
                    winv[static_cast<size_t>(p)] * v[static_cast<size_t>(p)] - dt * lap[p];
        };

        // preconditioned CG
        std::vector<double> x(static_cast<size_t>(total), 0.0), r = rhs,
                            z(static_cast<size_t>(total)), pdir, Ap(static_cast<size_t>(total));
        precond_->apply(r, z);
        pdir = z;
        double rz = 0.0, rhs_norm = 0.0;
        for (int p = 0; p < total; ++p) {
            rz += r[static_cast<size_t>(p)] * z[static_cast<size_t>(p)];
            rhs_norm += rhs[static_cast<size_t>(p)] * rhs[static_cast<size_t>(p)];
        }
        rhs_norm = std::sqrt(rhs_norm);
        const double tol = cfg_.cg_rel_tol * std::max(rhs_norm, 1e-300);
        for (int it = 0; it < 1000 && rhs_norm > 0.0; ++it) {
            apply_A(pdir, Ap);
            double pAp = 0.0;
            for (int p = 0; p < total; ++p) pAp += pdir[static_cast<size_t>(p)] * Ap[static_cast<size_t>(p)];
            const double alpha = rz / pAp;
            double rnorm = 0.0;
            for (int p = 0; p < total; ++p) {
                x[static_cast<size_t>(p)] += alpha * pdir[static_cast<size_t>(p)];
                r[static_cast<size_t>(p)] -= alpha * Ap[static_cast<size_t>(p)];
                rnorm += r[static_cast<size_t>(p)] * r[static_cast<size_t>(p)];
            }
            if (std::sqrt(rnorm) <= tol) break;
            precond_->apply(r, z);
            double rz_new = 0.0;
            for (int p = 0; p < total; ++p) rz_new += r[static_cast<size_t>(p)] * z[static_cast<size_t>(p)];
            const double beta = rz_new / rz;
            rz = rz_new;
            for (int p = 0; p < total; ++p)
                pdir[static_cast<size_t>(p)] = z[static_cast<size_t>(p)] + beta * pdir[static_cast<size_t>(p)];
        }
        for (int p = 0; p < total; ++p)
            ustar[p] = u[p] + winv[static_cast<size_t>(p)] * x[static_cast<size_t>(p)];
    }

    const SolverConfig& cfg_;
    const ModelSpec& model_;
    TorusGrid grid_;
    std::vector<VectorField> wmode_;
    std::vector<Field> divw_;
    std::unique_ptr<CirculantPreconditioner> precond_;
    double mean_reaction_dt_ = 0.0;
};

}  // namespace

// ---------------------------------------------------------------------------

Field step(const Field& u, double t, std::span<const double> dW, const SolverConfig& cfg,
           const ModelSpec& model) {
    if (static_cast<int>(dW.size()) < model.noise.mode_count())
        throw ConfigError("step: increment count below mode count");
    Stepper stepper(cfg, model);
    Field psi_next = model.obstacle.sample(cfg.grid, t + cfg.dt);
    Field out = u;
    Field nu(cfg.grid);
    stepper.advance(out, t, dW, psi_next, nu, 0);
    return out;
}

Trajectory solve(const SolverConfig& cfg, const ModelSpec& model, const Field& ic,
                 const NoisePathSpec& noise) {
    if (!(ic.grid() == cfg.grid)) throw GridMismatchError("solve: initial data on wrong grid");
    const double r_window = default_coeff_range(cfg, model, ic);
    cfg.validate(model, r_window);
    if (noise.mode_count != model.noise.mode_count())
        throw ConfigError("solve: noise spec mode count does not match the model");

    const int total = cfg.grid.total_points();
    const long nsteps = cfg.steps();

    // truncated initial data
    Field u(cfg.grid);
    const double n_lim = cfg.level > 0 ? static_cast<double>(cfg.level) : 0.0;
    for (int p = 0; p < total; ++p)
        u[p] = cfg.level > 0 ? std::clamp(ic[p], -n_lim, n_lim) : ic[p];

    Field psi0 = model.obstacle.sample(cfg.grid, 0.0);
    for (int p = 0; p < total; ++p) {
        if (u[p] < psi0[p] - 1e-12)
            throw ConfigError(
                "solve: initial data (after truncation) lies below the obstacle at cell " +
                std::to_string(p));
    }

    Trajectory traj;
    traj.config = cfg;
    traj.model = model;
    traj.noise_spec = noise;
    traj.noise_spec.step_count = static_cast<int>(nsteps);
    traj.noise_spec.dt = cfg.dt;

    traj.times.push_back(0.0);
    traj.step_index.push_back(0);
    traj.states.push_back(u);
    traj.penalty_fields.emplace_back(cfg.grid);  // zero by compatibility

    RunningStats& rs = traj.stats;
    rs.sup_l2_sq = l2_norm(u) * l2_norm(u);
    rs.sup_lmp1 = lp_norm_p(u, model.m() + 1.0);

    if (nsteps == 0) return traj;

    Stepper stepper(cfg, model);
    Field nu(cfg.grid);
    std::vector<double> dw(static_cast<size_t>(std::max(model.noise.mode_count(), 1)), 0.0);
    const double hvol = cfg.grid.cell_volume();
    const double m_exp = model.m();
    // the CFL bound was taken over |r| <= r_window; raw power-law coefficients
    // grow beyond it, so leaving the window invalidates the explicit scheme
    const bool guard_range = cfg.scheme == Scheme::Explicit && !model.flux.smoothed();
    const double guard = r_window * (1.0 + 1e-9);

    for (long j = 0; j < nsteps; ++j) {
        const double t = cfg.dt * static_cast<double>(j);
        const double t_next = cfg.dt * static_cast<double>(j + 1);
        for (int k = 0; k < model.noise.mode_count(); ++k)
            dw[static_cast<size_t>(k)] = wiener_increment(traj.noise_spec, static_cast<int>(j), k);

        Field psi_next = model.obstacle.sample(cfg.grid, t_next);
        const StepStats st = stepper.advance(u, t, dw, psi_next, nu, j);
        if (guard_range) {
            for (int p = 0; p < total; ++p) {
                if (std::abs(u[p]) > guard)
                    throw IntegrationError(
                        "state left the coefficient window backing the CFL bound; raise "
                        "coeff_range",
                        j, p);
            }
        }

        // norms and Q_T integrals (post-update state, weight dt)
        auto powa = [](double x, double e) {
            if (e == 1.0) return std::abs(x);
            if (e == 2.0) return x * x;
            if (e == 3.0) {
                const double a = std::abs(x);
                return a * a * a;
            }
            return std::pow(std::abs(x), e);
        };
        CompensatedSum l2s, lmp1, viol2, viol1, violw, gb, gp;
        {
            Field bs(cfg.grid), pf(cfg.grid);
            for (int p = 0; p < total; ++p) {
                const double up = u[p];
                l2s.add(up * up);
                lmp1.add(powa(up, m_exp + 1.0));
                const double v = std::max(psi_next[p] - up, 0.0);
                viol2.add(v * v);
                viol1.add(v);
                violw.add(v * v * powa(up, m_exp - 1.0));
                bs[p] = model.flux.bracket_sqrt(up);
                pf[p] = model.flux.phi(up);
            }
            VectorField gbs = gradient(bs);
            VectorField gpf = gradient(pf);
            for (int i = 0; i < cfg.grid.dim; ++i) {
                for (int p = 0; p < total; ++p) {
                    gb.add(gbs.component(i)[p] * gbs.component(i)[p]);
                    gp.add(gpf.component(i)[p] * gpf.component(i)[p]);
                }
            }
        }
        const double l2 = std::sqrt(hvol * l2s.value());

        // discrete mass identity, checked at every step
        const double residual = std::abs(st.mean_after - st.mean_before - st.mean_forcing_dt);
        rs.max_mass_residual_rel =
            std::max(rs.max_mass_residual_rel, residual / std::max(l2, 1e-30));
        rs.min_penalty_increment = std::min(rs.min_penalty_increment, st.min_penalty_increment);
        rs.max_contraction_excess = std::max(rs.max_contraction_excess, st.contraction_excess);

        rs.sup_l2_sq = std::max(rs.sup_l2_sq, l2 * l2);
        rs.sup_lmp1 = std::max(rs.sup_lmp1, hvol * lmp1.value());
        rs.penalty_l2_qt_sq += cfg.dt * hvol * viol2.value();
        rs.penalty_l1_qt += cfg.dt * hvol * viol1.value();
        rs.weighted_violation_qt += cfg.dt * hvol * violw.value();
        rs.grad_bracket_sqrt_qt += cfg.dt * hvol * gb.value();
        rs.grad_phi_qt += cfg.dt * hvol * gp.value();

        if (j + 1 == nsteps || (j + 1) % cfg.record_stride == 0) {
            traj.times.push_back(t_next);
            traj.step_index.push_back(j + 1);
            traj.states.push_back(u);
            traj.penalty_fields.push_back(nu);
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// CompensationMeasure

CompensationMeasure::CompensationMeasure(const Trajectory& traj) : grid_(traj.config.grid) {
    times_.reserve(static_cast<size_t>(traj.records()));
    weights_.reserve(static_cast<size_t>(traj.records()));
    CompensatedSum mass;
    const double hvol = grid_.cell_volume();
    for (int j = 0; j < traj.records(); ++j) {
        times_.push_back(traj.times[static_cast<size_t>(j)]);
        weights_.push_back(traj.record_weight(j));
        densities_.push_back(traj.penalty_fields[static_cast<size_t>(j)]);
        const double w = weights_.back() * hvol;
        for (int p = 0; p < grid_.total_points(); ++p)
            mass.add(w * densities_.back()[p]);
    }
    total_mass_ = mass.value();
}

double CompensationMeasure::pair(const std::function<double(double, double, double)>& g) const {
    CompensatedSum s;
    const double hvol = grid_.cell_volume();
    for (size_t j = 0; j < times_.size(); ++j) {
        if (weights_[j] == 0.0) continue;
        const double w = weights_[j] * hvol;
        for (int p = 0; p < grid_.total_points(); ++p) {
            const auto xy = grid_.coords(p);
            s.add(w * densities_[j][p] * g(times_[j], xy[0], xy[1]));
        }
    }
    return s.value();
}

double CompensationMeasure::pair_cells(const std::function<double(int, int)>& g) const {
    CompensatedSum s;
    const double hvol = grid_.cell_volume();
    for (size_t j = 0; j < times_.size(); ++j) {
        if (weights_[j] == 0.0) continue;
        const double w = weights_[j] * hvol;
        for (int p = 0; p < grid_.total_points(); ++p)
            s.add(w * densities_[j][p] * g(static_cast<int>(j), p));
    }
    return s.value();
}

CompensationMeasure compensation_measure(const Trajectory& traj) {
    return CompensationMeasure(traj);
}

// ---------------------------------------------------------------------------

EpsilonRefinement refine_epsilon(const SolverConfig& cfg, const ModelSpec& model, const Field& ic,
                                 const NoisePathSpec& noise, const std::vector<double>& schedule) {
    if (schedule.empty()) throw ConfigError("refine_epsilon: empty schedule");
    for (size_t i = 0; i + 1 < schedule.size(); ++i) {
        if (!(schedule[i] > schedule[i + 1]))
            throw ConfigError("refine_epsilon: schedule must be strictly decreasing");
    }
    for (double e : schedule)
        if (e <= 0.0) throw ConfigError("refine_epsilon: epsilons must be positive");

    EpsilonRefinement out;
    out.epsilons = schedule;
    for (double e : schedule) {
        SolverConfig c = cfg;
        c.eps = e;
        out.trajectories.push_back(solve(c, model, ic, noise));
        out.penalty_l2_qt.push_back(std::sqrt(out.trajectories.back().stats.penalty_l2_qt_sq));
    }
    for (size_t i = 0; i + 1 < out.trajectories.size(); ++i) {
        const Trajectory& a = out.trajectories[i];      // larger eps
        const Trajectory& b = out.trajectories[i + 1];  // smaller eps
        double worst = -1e300;
        for (int j = 0; j < a.records(); ++j) {
            for (int p = 0; p < cfg.grid.total_points(); ++p)
                worst = std::max(worst, a.states[static_cast<size_t>(j)][p] -
                                            b.states[static_cast<size_t>(j)][p]);
        }
        out.max_order_violation.push_back(worst);
    }
    return out;
}

}  // namespace pmob
