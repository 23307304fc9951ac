#include "pmob/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "json.hpp"

namespace pmob {

// ---------------------------------------------------------------------------
// EntropyTestPack

EntropyTestPack::EntropyTestPack(double delta, double sign, const TimeCutoff& cutoff,
                                 Field profile)
    : delta_(delta), sign_(sign), cutoff_(cutoff), profile_(std::move(profile)) {
    for (int p = 0; p < profile_.size(); ++p) {
        if (profile_[p] < 0.0)
            throw ConfigError("EntropyTestPack: space profile must be nonnegative");
    }
}

EntropyTestPack EntropyTestPack::convex(double delta, const TimeCutoff& cutoff,
                                        Field space_profile) {
    if (delta <= 0.0) throw ConfigError("EntropyTestPack: delta must be positive");
    return EntropyTestPack(delta, 1.0, cutoff, std::move(space_profile));
}

EntropyTestPack EntropyTestPack::identity(double sign, const TimeCutoff& cutoff,
                                          Field space_profile) {
    return EntropyTestPack(0.0, sign >= 0.0 ? 1.0 : -1.0, cutoff, std::move(space_profile));
}

double EntropyTestPack::eta(double r) const {
    if (is_identity()) return sign_ * r;
    return delta_ * Mollifier::instance().cumulative2(std::abs(r) / delta_);
}

double EntropyTestPack::eta_prime(double r) const {
    if (is_identity()) return sign_;
    const double c = Mollifier::instance().cumulative(std::abs(r) / delta_);
    return std::copysign(c, r);
}

double EntropyTestPack::eta_second(double r) const {
    if (is_identity()) return 0.0;
    return Mollifier::instance()(std::abs(r) / delta_) / delta_;
}

EntropyTestPack EntropyTestPack::scaled(double lambda) const {
    EntropyTestPack out = *this;
    for (int p = 0; p < out.profile_.size(); ++p) out.profile_[p] *= lambda;
    return out;
}

// ---------------------------------------------------------------------------
// Per-cell bracket tables: cumulative integral of q(s) * eta'(s) from 0,
// cubic Hermite between nodes (the integrand is the exact derivative).

namespace {

class BracketTable {
public:
    BracketTable() = default;

    void build(double lo, double hi, int min_nodes,
               const std::function<double(double)>& integrand) {
        lo = std::min(lo, 0.0) - 1e-9;
        hi = std::max(hi, 0.0) + 1e-9;
        const int n = std::max(min_nodes, 64);
        step_ = (hi - lo) / n;
        // align so that r = 0 falls on a node
        lo_ = -step_ * std::ceil(-lo / step_);
        const int nodes = static_cast<int>(std::ceil((hi - lo_) / step_)) + 2;
        q_.resize(static_cast<size_t>(nodes));
        cum_.resize(static_cast<size_t>(nodes));
        for (int i = 0; i < nodes; ++i) q_[static_cast<size_t>(i)] = integrand(lo_ + i * step_);
        // composite Simpson per interval
        CompensatedSum acc;
        cum_[0] = 0.0;
        for (int i = 1; i < nodes; ++i) {
            const double a = lo_ + (i - 1) * step_;
            const double mid = integrand(a + 0.5 * step_);
            acc.add(step_ / 6.0 * (q_[static_cast<size_t>(i - 1)] + 4.0 * mid +
                                   q_[static_cast<size_t>(i)]));
            cum_[static_cast<size_t>(i)] = acc.value();
        }
        // anchor at zero
        anchor_ = raw_eval(0.0);
    }

    double eval(double r) const { return raw_eval(r) - anchor_; }

private:
    double raw_eval(double r) const {
        const double s = (r - lo_) / step_;
        int i = static_cast<int>(std::floor(s));
        i = std::clamp(i, 0, static_cast<int>(cum_.size()) - 2);
        const double t = s - i;
        const double c0 = cum_[static_cast<size_t>(i)], c1 = cum_[static_cast<size_t>(i + 1)];
        const double d0 = q_[static_cast<size_t>(i)] * step_, d1 = q_[static_cast<size_t>(i + 1)] * step_;
        const double t2 = t * t, t3 = t2 * t;
        return (2.0 * t3 - 3.0 * t2 + 1.0) * c0 + (t3 - 2.0 * t2 + t) * d0 +
               (-2.0 * t3 + 3.0 * t2) * c1 + (t3 - t2) * d1;
    }

    double lo_ = 0.0, step_ = 1.0, anchor_ = 0.0;
    std::vector<double> q_, cum_;
};

struct ModeTables {
    BracketTable a;  // [[ amp^2 s'^2 eta' ]]
    BracketTable b;  // [[ amp^2 (s'' s + s'^2) eta' ]]
    BracketTable c;  // [[ amp s' eta' ]]
};

}  // namespace

// ---------------------------------------------------------------------------

EntropyResidual entropy_residual(const Trajectory& traj, const CompensationMeasure& nu,
                                 const EntropyTestPack& pack) {
    const TorusGrid& grid = traj.config.grid;
    if (!(pack.profile().grid() == grid))
        throw ConfigError("entropy_residual: test profile lives on the wrong grid");
    if (nu.records() != traj.records() || nu.grid().total_points() != grid.total_points())
        throw ConfigError("entropy_residual: measure does not match the trajectory");
    const int total = grid.total_points();
    const int R = traj.records();
    const double hvol = grid.cell_volume();
    const ModelSpec& model = traj.model;
    const FluxFunction& flux = model.flux;
    const int modes = model.noise.mode_count();
    const TimeCutoff& cutoff = pack.cutoff();

    // value range of the run, for the bracket tables
    double lo = 0.0, hi = 0.0;
    for (const Field& f : traj.states) {
        for (int p = 0; p < total; ++p) {
            lo = std::min(lo, f[p]);
            hi = std::max(hi, f[p]);
        }
    }

    auto etap = [&](double s) { return pack.eta_prime(s); };
    // [[ phi' eta' ]](r) = phi(r) eta'(r) - int_0^r phi eta'', by parts; the
    // boundary part reuses the exact flux the scheme integrated, so the
    // linear entropies reduce to the scheme's own weak form
    BracketTable phi_convex;  // int_0^r phi(s) eta''(s) ds, zero for eta = +-r
    if (!pack.is_identity()) {
        phi_convex.build(lo, hi, 8192,
                         [&](double s) { return flux.phi(s) * pack.eta_second(s); });
    }
    auto phi_bracket = [&](double up) {
        const double boundary = flux.phi(up) * pack.eta_prime(up);
        return pack.is_identity() ? boundary : boundary - phi_convex.eval(up);
    };

    std::vector<ModeTables> mode_tables(static_cast<size_t>(modes));
    for (int k = 0; k < modes; ++k) {
        const NoiseMode& m = model.noise.modes()[static_cast<size_t>(k)];
        mode_tables[static_cast<size_t>(k)].a.build(lo, hi, 4096, [&](double s) {
            const double sp = m.amp * m.s_r(s);
            return sp * sp * etap(s);
        });
        mode_tables[static_cast<size_t>(k)].b.build(lo, hi, 4096, [&](double s) {
            return m.amp * m.amp * (m.s_rr(s) * m.s(s) + m.s_r(s) * m.s_r(s)) * etap(s);
        });
        mode_tables[static_cast<size_t>(k)].c.build(lo, hi, 4096, [&](double s) {
            return m.amp * m.s_r(s) * etap(s);
        });
    }

    // frozen spatial factors of the test function and the noise modes
    const Field& prof = pack.profile();
    Field lap_prof = laplacian(prof);
    VectorField grad_prof = gradient(prof);
    std::vector<Field> hess_prof;  // d_i d_j, row-major over (i, j)
    for (int i = 0; i < grid.dim; ++i) {
        VectorField gi = gradient(grad_prof.component(i));
        for (int j = 0; j < grid.dim; ++j) hess_prof.push_back(gi.component(j));
    }

    struct ModeGeometry {
        VectorField w;       // w^i
        Field divw;          // sum_i d_i w^i
        VectorField grad_divw;  // d_i divw
        std::vector<Field> dw;  // d_j (w^i w^j) summed over j, per i
        Field div_wdivw;        // sum_i d_i (w^i divw)
    };
    std::vector<ModeGeometry> geom;
    for (int k = 0; k < modes; ++k) {
        const NoiseMode& m = model.noise.modes()[static_cast<size_t>(k)];
        ModeGeometry g{VectorField(grid), Field(grid), VectorField(grid), {}, Field(grid)};
        for (int i = 0; i < grid.dim; ++i) g.dw.emplace_back(grid);
        for (int p = 0; p < total; ++p) {
            const auto xy = grid.coords(p);
            double dv = 0.0;
            for (int i = 0; i < grid.dim; ++i) {
                g.w.component(i)[p] = m.w(i, xy[0], xy[1]);
                dv += m.w_x(i, i, xy[0], xy[1]);
            }
            g.divw[p] = dv;
            for (int i = 0; i < grid.dim; ++i) {
                // sum_j d_j (w^i w^j) and d_i divw, analytic
                double s1 = 0.0;
                for (int j = 0; j < grid.dim; ++j) {
                    s1 += m.w_x(i, j, xy[0], xy[1]) * m.w(j, xy[0], xy[1]) +
                          m.w(i, xy[0], xy[1]) * m.w_x(j, j, xy[0], xy[1]);
                }
                g.dw[static_cast<size_t>(i)][p] = s1;
                double gd = 0.0;
                for (int j = 0; j < grid.dim; ++j) gd += m.w_xx(j, j, i, xy[0], xy[1]);
                g.grad_divw.component(i)[p] = gd;
            }
            double dwd = 0.0;
            for (int i = 0; i < grid.dim; ++i) {
                dwd += m.w_x(i, i, xy[0], xy[1]) * g.divw[p] +
                       g.w.component(i)[p] * g.grad_divw.component(i)[p];
            }
            g.div_wdivw[p] = dwd;
        }
        geom.push_back(std::move(g));
    }

    EntropyResidual res;

    // time term: eta(u) at the right record against the forward phi-difference
    {
        CompensatedSum s;
        for (int j = 0; j + 1 < R; ++j) {
            const double dphi_t = cutoff(traj.times[static_cast<size_t>(j + 1)]) -
                                  cutoff(traj.times[static_cast<size_t>(j)]);
            if (dphi_t == 0.0) continue;
            const Field& u = traj.states[static_cast<size_t>(j + 1)];
            for (int p = 0; p < total; ++p) s.add(pack.eta(u[p]) * dphi_t * prof[p]);
        }
        res.time_term = -hvol * s.value();
    }

    // measure term, paired at the atom coordinates
    res.measure_term = -nu.pair_cells([&](int j, int p) {
        const auto xy = grid.coords(p);
        const double psi = model.obstacle(nu.time(j), xy[0], xy[1]);
        return pack.eta_prime(psi) * cutoff(nu.time(j)) * prof[p];
    });

    // initial term
    {
        CompensatedSum s;
        const Field& xi = traj.states.front();
        const double c0 = cutoff(0.0);
        for (int p = 0; p < total; ++p) s.add(pack.eta(xi[p]) * c0 * prof[p]);
        res.initial_term = hvol * s.value();
    }

    // drift terms, left-point in time with weight t_{j+1} - t_j
    {
        CompensatedSum diff, ito2, ito1, zero, convex;
        for (int j = 0; j + 1 < R; ++j) {
            const double t = traj.times[static_cast<size_t>(j)];
            const double w = traj.times[static_cast<size_t>(j + 1)] - t;
            const double ct = cutoff(t);
            const Field& u = traj.states[static_cast<size_t>(j)];

            for (int p = 0; p < total; ++p) {
                const double up = u[p];
                const double ep = pack.eta_prime(up);
                diff.add(w * phi_bracket(up) * ct * lap_prof[p]);

                if (modes > 0) {
                    double second = 0.0, first = 0.0, zer = 0.0;
                    double sigx_sq = 0.0;
                    for (int k = 0; k < modes; ++k) {
                        const NoiseMode& m = model.noise.modes()[static_cast<size_t>(k)];
                        const ModeGeometry& g = geom[static_cast<size_t>(k)];
                        const double Ta = mode_tables[static_cast<size_t>(k)].a.eval(up);
                        const double Tb = mode_tables[static_cast<size_t>(k)].b.eval(up);
                        const double sv = m.amp * m.s(up);
                        const double srv = m.amp * m.s_r(up);

                        // [[a^{ij} eta']] d_i d_j phi
                        for (int i = 0; i < grid.dim; ++i)
                            for (int jj = 0; jj < grid.dim; ++jj)
                                second += 0.5 * Ta * g.w.component(i)[p] * g.w.component(jj)[p] *
                                          hess_prof[static_cast<size_t>(i * grid.dim + jj)][p];

                        // ([[ (a^{ij}_{x_j} + b^i_r) eta' ]] - 2 eta' b^i) d_i phi
                        for (int i = 0; i < grid.dim; ++i) {
                            const double bracket_part =
                                0.5 * Ta * g.dw[static_cast<size_t>(i)][p] +
                                0.5 * Tb * g.w.component(i)[p] * g.divw[p];
                            const double bi = 0.5 * srv * g.w.component(i)[p] * sv * g.divw[p];
                            first += (bracket_part - 2.0 * ep * bi) *
                                     grad_prof.component(i)[p];
                        }

                        // (-eta' b^i_{x_i} + [[ b^i_{r x_i} eta' ]]) phi
                        const double b_div = 0.5 * srv * sv * g.div_wdivw[p];
                        zer += (-ep * b_div + 0.5 * Tb * g.div_wdivw[p]) * prof[p];

                        const double sx = sv * g.divw[p];  // sum_i sigma^{ik}_{x_i}
                        sigx_sq += sx * sx;
                    }
                    ito2.add(w * ct * second);
                    ito1.add(w * ct * first);
                    zero.add(w * ct * zer);
                    convex.add(w * ct * 0.5 * pack.eta_second(up) * sigx_sq * prof[p]);
                }

                if (!model.reaction.is_none()) {
                    const auto xy = grid.coords(p);
                    zero.add(w * ct * ep * model.reaction(t, xy[0], xy[1], up) * prof[p]);
                }
            }

            // -eta''(u) |grad [[sqrt(phi')]](u)|^2 phi
            if (!pack.is_identity()) {
                Field bs(grid);
                for (int p = 0; p < total; ++p) bs[p] = flux.bracket_sqrt(u[p]);
                VectorField gbs = gradient(bs);
                for (int p = 0; p < total; ++p) {
                    double g2 = 0.0;
                    for (int i = 0; i < grid.dim; ++i)
                        g2 += gbs.component(i)[p] * gbs.component(i)[p];
                    convex.add(-w * ct * pack.eta_second(u[p]) * g2 * prof[p]);
                }
            }
        }
        res.diffusion_term = hvol * diff.value();
        res.ito_second_term = hvol * ito2.value();
        res.ito_first_term = hvol * ito1.value();
        res.zero_order_term = hvol * zero.value();
        res.convexity_term = hvol * convex.value();
    }

    // stochastic term: left-point states against the aggregated increments
    if (modes > 0) {
        CompensatedSum s;
        for (int j = 0; j + 1 < R; ++j) {
            const double t = traj.times[static_cast<size_t>(j)];
            const double ct = cutoff(t);
            if (ct == 0.0) continue;
            const Field& u = traj.states[static_cast<size_t>(j)];
            const long s0 = traj.step_index[static_cast<size_t>(j)];
            const long s1 = traj.step_index[static_cast<size_t>(j + 1)];
            for (int k = 0; k < modes; ++k) {
                const NoiseMode& m = model.noise.modes()[static_cast<size_t>(k)];
                const ModeGeometry& g = geom[static_cast<size_t>(k)];
                double dw_sum = 0.0;
                for (long q = s0; q < s1; ++q)
                    dw_sum += wiener_increment(traj.noise_spec, static_cast<int>(q), k);
                CompensatedSum inner_sum;
                for (int p = 0; p < total; ++p) {
                    const double up = u[p];
                    const double sv = m.amp * m.s(up);
                    const double ep = pack.eta_prime(up);
                    const double Tc = mode_tables[static_cast<size_t>(k)].c.eval(up);
                    // eta'(u) phi sigma^{ik}_{x_i} - [[sigma_{r x_i} eta']] phi
                    double cell = ep * ct * prof[p] * sv * g.divw[p] -
                                  Tc * g.divw[p] * ct * prof[p];
                    // - [[sigma_r eta']] d_i phi
                    for (int i = 0; i < grid.dim; ++i)
                        cell -= Tc * g.w.component(i)[p] * ct * grad_prof.component(i)[p];
                    inner_sum.add(cell);
                }
                s.add(hvol * inner_sum.value() * dw_sum);
            }
        }
        res.stochastic_term = s.value();
    }

    const double rhs = res.initial_term + res.diffusion_term + res.ito_second_term +
                       res.ito_first_term + res.zero_order_term + res.convexity_term +
                       res.stochastic_term;
    res.total = (res.time_term + res.measure_term) - rhs;
    return res;
}

// ---------------------------------------------------------------------------

double skorohod_defect(const Trajectory& traj, const CompensationMeasure& nu) {
    const TorusGrid& grid = traj.config.grid;
    const double v = nu.pair_cells([&](int j, int p) {
        const auto xy = grid.coords(p);
        const double psi = traj.model.obstacle(nu.time(j), xy[0], xy[1]);
        return traj.states[static_cast<size_t>(j)][p] - psi;
    });
    return std::abs(v);
}

// ---------------------------------------------------------------------------
// DiagnosticsReport

void DiagnosticsReport::add(const std::string& name, double value) {
    entries.push_back({name, value, std::nullopt, std::isfinite(value)});
}

void DiagnosticsReport::add_checked(const std::string& name, double value, double tolerance) {
    entries.push_back({name, value, tolerance, std::isfinite(value) && value <= tolerance});
}

const ReportEntry* DiagnosticsReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

bool DiagnosticsReport::all_pass() const {
    for (const auto& e : entries)
        if (!e.pass) return false;
    return true;
}

bool DiagnosticsReport::all_finite() const {
    for (const auto& e : entries)
        if (!std::isfinite(e.value)) return false;
    return true;
}

void DiagnosticsReport::write_csv(std::ostream& out) const {
    out << "name,value,tolerance,pass,config\n";
    char buf[64];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.value);
        out << e.name << ',' << buf << ',';
        if (e.tolerance) {
            std::snprintf(buf, sizeof(buf), "%.17g", *e.tolerance);
            out << buf;
        }
        out << ',' << (e.pass ? 1 : 0) << ',' << config_fingerprint << '\n';
    }
}

std::string DiagnosticsReport::to_json() const {
    nlohmann::json j;
    j["config"] = config_fingerprint;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json je;
        je["name"] = e.name;
        je["value"] = e.value;
        if (e.tolerance) je["tolerance"] = *e.tolerance;
        je["pass"] = e.pass;
        arr.push_back(je);
    }
    j["entries"] = arr;
    return j.dump(2);
}

// ---------------------------------------------------------------------------

std::string config_fingerprint(const Trajectory& traj) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    auto mixd = [&](double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        mix(bits);
    };
    mix(static_cast<std::uint64_t>(traj.config.grid.dim));
    mix(static_cast<std::uint64_t>(traj.config.grid.points_per_dim));
    mixd(traj.config.final_time);
    mixd(traj.config.dt);
    mixd(traj.config.eps);
    mix(static_cast<std::uint64_t>(traj.config.level));
    mixd(traj.model.m());
    mixd(traj.model.K());
    mix(traj.noise_spec.seed);
    mix(traj.noise_spec.trajectory_id);
    mix(static_cast<std::uint64_t>(traj.noise_spec.mode_count));
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

DiagnosticsReport apriori_monitor(const Trajectory& traj) {
    const RunningStats& rs = traj.stats;
    const double eps = traj.config.eps;
    DiagnosticsReport rep;
    rep.config_fingerprint = config_fingerprint(traj);
    rep.add("sup_l2_sq", rs.sup_l2_sq);
    rep.add("grad_bracket_sqrt_qt", rs.grad_bracket_sqrt_qt);
    rep.add("penalty_l2_scaled", rs.penalty_l2_qt_sq / eps);
    rep.add("penalty_mass", rs.penalty_l1_qt / eps);
    rep.add("sup_lmp1", rs.sup_lmp1);
    rep.add("grad_phi_qt", rs.grad_phi_qt);
    rep.add("weighted_violation_scaled", rs.weighted_violation_qt / eps);
    return rep;
}

// ---------------------------------------------------------------------------

namespace {
void require_coupled(const Trajectory& a, const Trajectory& b) {
    if (!(a.config.grid == b.config.grid) || a.config.dt != b.config.dt ||
        a.config.final_time != b.config.final_time || a.config.eps != b.config.eps ||
        a.config.level != b.config.level || a.records() != b.records())
        throw ConfigError("l1_stability: runs have different configurations");
    if (!a.noise_spec.same_noise(b.noise_spec))
        throw ConfigError("l1_stability: runs are not driven by a common noise path");
}
}  // namespace

StabilitySeries l1_stability(const Trajectory& a, const Trajectory& b) {
    return l1_stability_mean({a}, {b});
}

StabilitySeries l1_stability_mean(const std::vector<Trajectory>& as,
                                  const std::vector<Trajectory>& bs) {
    if (as.empty() || as.size() != bs.size())
        throw ConfigError("l1_stability: member counts differ");
    for (size_t i = 0; i < as.size(); ++i) require_coupled(as[i], bs[i]);

    const Trajectory& first = as.front();
    const TorusGrid& grid = first.config.grid;
    StabilitySeries out;
    out.times = first.times;
    out.distance.assign(first.times.size(), 0.0);
    for (size_t i = 0; i < as.size(); ++i) {
        for (int j = 0; j < first.records(); ++j) {
            CompensatedSum s;
            for (int p = 0; p < grid.total_points(); ++p)
                s.add(std::abs(as[i].states[static_cast<size_t>(j)][p] -
                               bs[i].states[static_cast<size_t>(j)][p]));
            out.distance[static_cast<size_t>(j)] += grid.cell_volume() * s.value();
        }
    }
    for (double& d : out.distance) d /= static_cast<double>(as.size());
    out.initial_distance = out.distance.front();
    if (out.initial_distance == 0.0) {
        out.ratio = 0.0;
    } else {
        double sup = 0.0;
        for (double d : out.distance) sup = std::max(sup, d);
        out.ratio = sup / out.initial_distance;
    }
    return out;
}

std::vector<double> initial_attainment(const Trajectory& traj, const Field& xi,
                                       const std::vector<double>& taus) {
    if (!(xi.grid() == traj.config.grid))
        throw GridMismatchError("initial_attainment: xi on the wrong grid");
    const double dt = traj.config.dt;
    std::vector<double> out;
    for (double tau : taus) {
        if (tau < dt - 1e-12 || tau > traj.config.final_time + 1e-12)
            throw ConfigError("initial_attainment: tau outside [dt, T]");
        const double ratio = tau / dt;
        if (std::abs(ratio - std::round(ratio)) > 1e-6)
            throw ConfigError("initial_attainment: tau must be a multiple of dt");
        CompensatedSum acc;
        for (int j = 1; j < traj.records(); ++j) {
            if (traj.times[static_cast<size_t>(j)] > tau + 1e-12) break;
            const Field& u = traj.states[static_cast<size_t>(j)];
            CompensatedSum diff;
            for (int p = 0; p < u.size(); ++p) {
                const double d = u[p] - xi[p];
                diff.add(d * d);
            }
            acc.add(traj.record_weight(j) * traj.config.grid.cell_volume() * diff.value());
        }
        out.push_back(acc.value() / tau);
    }
    return out;
}

}  // namespace pmob
