#include "pmob/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pmob/validation.hpp"

namespace fs = std::filesystem;

namespace pmob {

double RunResult::summary_value(const std::string& name) const {
    for (const auto& kv : summary)
        if (kv.first == name) return kv.second;
    throw std::out_of_range("summary has no entry " + name);
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

using Rows = std::vector<std::pair<std::string, double>>;

std::string rows_to_csv(const Rows& rows) {
    std::ostringstream out;
    out << "name,value\n";
    for (const auto& kv : rows) out << kv.first << ',' << fmt(kv.second) << '\n';
    return out.str();
}

Rows rows_from_csv_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Rows rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find_last_of(',');
        rows.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    }
    return rows;
}

NoisePathSpec base_noise(const ExperimentConfig& cfg, std::uint64_t seed, int member) {
    NoisePathSpec spec;
    spec.seed = seed;
    spec.trajectory_id = static_cast<std::uint64_t>(member);
    spec.mode_count = cfg.noise_modes;
    if (cfg.noise_family == "none") spec.mode_count = 0;
    return spec;
}

Field entropy_profile(const TorusGrid& g) {
    Field f(g);
    for (int p = 0; p < g.total_points(); ++p) {
        const auto xy = g.coords(p);
        f[p] = 1.0 + 0.5 * std::cos(2.0 * M_PI * xy[0]);
    }
    return f;
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(std::max(y[i], 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// --------------------------------------------------------------------------
// per-kind experiment bodies; each fills summary rows and diagnostics

struct Context {
    const ExperimentConfig& cfg;
    const RunOptions& opts;
    fs::path out;
    std::uint64_t seed;
    Rows summary;
    DiagnosticsReport diag;

    void add_summary(const std::string& name, double v) { summary.emplace_back(name, v); }
};

void base_run_checks(Context& ctx, const Trajectory& traj, const std::string& prefix = "") {
    const double mass_tol = traj.config.scheme == Scheme::Explicit ? 1e-12 : 1e-9;
    ctx.diag.add_checked(prefix + "mass_identity_rel", traj.stats.max_mass_residual_rel, mass_tol);
    ctx.diag.add_checked(prefix + "penalty_negative_part", -traj.stats.min_penalty_increment,
                         0.0);
    ctx.diag.add_checked(prefix + "contraction_excess", traj.stats.max_contraction_excess, 1e-12);
}

void skorohod_identity_check(Context& ctx, const Trajectory& traj, const CompensationMeasure& nu,
                             const std::string& prefix = "") {
    const double defect = skorohod_defect(traj, nu);
    double l2sq = 0.0;
    const TorusGrid& g = traj.config.grid;
    for (int j = 1; j < traj.records(); ++j) {
        Field psi = traj.model.obstacle.sample(g, traj.times[static_cast<size_t>(j)]);
        const double w = traj.record_weight(j) * g.cell_volume();
        for (int p = 0; p < g.total_points(); ++p) {
            const double v = std::max(psi[p] - traj.states[static_cast<size_t>(j)][p], 0.0);
            l2sq += w * v * v;
        }
    }
    const double scale = std::max({defect, l2sq / traj.config.eps, 1e-30});
    ctx.diag.add_checked(prefix + "skorohod_identity_rel",
                         std::abs(defect - l2sq / traj.config.eps) / scale, 1e-12);
    ctx.add_summary(prefix + "skorohod_defect", defect);
}

void attach_monitors(Context& ctx, const Trajectory& traj, const std::string& prefix = "") {
    DiagnosticsReport monitors = apriori_monitor(traj);
    for (const auto& e : monitors.entries) {
        ctx.add_summary(prefix + e.name, e.value);
        if (!std::isfinite(e.value)) ctx.diag.add_checked(prefix + e.name + "_finite", 1.0, 0.0);
    }
}

void run_single(Context& ctx) {
    const ModelSpec model = ctx.cfg.build_model();
    const Field ic = ctx.cfg.build_ic(ctx.cfg.solver.grid);
    const SolverConfig scfg = ctx.cfg.build_solver(model, ic);
    NoisePathSpec noise = base_noise(ctx.cfg, ctx.seed, 0);
    Trajectory traj = solve(scfg, model, ic, noise);

    save_trajectory(traj, ctx.cfg, (ctx.out / "trajectory").string());
    base_run_checks(ctx, traj);
    CompensationMeasure nu(traj);
    skorohod_identity_check(ctx, traj, nu);
    attach_monitors(ctx, traj);
    ctx.add_summary("records", traj.records());
    ctx.add_summary("dt", scfg.dt);
    ctx.add_summary("final_l2", l2_norm(traj.final_state()));
    ctx.add_summary("measure_mass", nu.total_mass());

    if (scfg.final_time > 0.0) {
        std::vector<double> taus = ctx.cfg.taus;
        if (taus.empty()) {
            for (double f : {0.25, 1.0 / 16.0, 1.0 / 64.0}) {
                const double raw = scfg.final_time * f;
                const double t = scfg.dt * std::round(raw / scfg.dt);
                if (t >= scfg.dt) taus.push_back(t);
            }
        }
        if (!taus.empty()) {
            const std::vector<double> att = initial_attainment(traj, traj.initial_state(), taus);
            for (size_t i = 0; i < att.size(); ++i) {
                ctx.add_summary("attainment_tau" + std::to_string(i), att[i]);
            }
        }
    }
}

void run_refine_eps(Context& ctx) {
    const ModelSpec model = ctx.cfg.build_model();
    const Field ic = ctx.cfg.build_ic(ctx.cfg.solver.grid);
    const SolverConfig scfg = ctx.cfg.build_solver(model, ic);
    NoisePathSpec noise = base_noise(ctx.cfg, ctx.seed, 0);
    EpsilonRefinement ref = refine_epsilon(scfg, model, ic, noise, ctx.cfg.eps_schedule);

    std::vector<double> defects;
    for (size_t i = 0; i < ref.trajectories.size(); ++i) {
        const Trajectory& t = ref.trajectories[i];
        const std::string tag = "eps" + std::to_string(i);
        base_run_checks(ctx, t, tag + "_");
        ctx.add_summary(tag, ref.epsilons[i]);
        ctx.add_summary(tag + "_penalty_l2_qt", ref.penalty_l2_qt[i]);
        const double defect = t.stats.penalty_l2_qt_sq / t.config.eps;
        defects.push_back(defect);
        ctx.add_summary(tag + "_skorohod_defect", defect);
        save_trajectory(t, ctx.cfg, (ctx.out / ("trajectory_" + tag)).string());
    }
    for (size_t i = 0; i < ref.max_order_violation.size(); ++i) {
        ctx.diag.add_checked("order_violation_pair" + std::to_string(i),
                             ref.max_order_violation[i], 1e-8);
    }
    for (size_t i = 0; i + 1 < ref.penalty_l2_qt.size(); ++i) {
        ctx.diag.add_checked("penalty_l2_monotone_pair" + std::to_string(i),
                             ref.penalty_l2_qt[i + 1] - ref.penalty_l2_qt[i], 1e-12);
        ctx.diag.add_checked("defect_monotone_pair" + std::to_string(i),
                             defects[i + 1] - defects[i], 1e-12);
    }
    if (ref.epsilons.size() >= 2) {
        const double slope = fit_loglog_slope(ref.epsilons, ref.penalty_l2_qt);
        ctx.add_summary("penalty_l2_slope", slope);
        double ratio_max = 0.0, ratio_min = 1e300;
        for (size_t i = 0; i < ref.epsilons.size(); ++i) {
            const double r = ref.penalty_l2_qt[i] / std::sqrt(ref.epsilons[i]);
            ratio_max = std::max(ratio_max, r);
            ratio_min = std::min(ratio_min, r);
        }
        ctx.add_summary("penalty_scaled_spread", ratio_min > 0.0 ? ratio_max / ratio_min : 0.0);
    }
}

Rows member_rows(const Trajectory& traj) {
    Rows rows;
    rows.emplace_back("max_mass_residual_rel", traj.stats.max_mass_residual_rel);
    DiagnosticsReport monitors = apriori_monitor(traj);
    for (const auto& e : monitors.entries) rows.emplace_back(e.name, e.value);
    return rows;
}

/// Runs fn(member) for every member missing an artifact, then loads all
/// member rows in index order (crash-resume without recomputation).
std::vector<Rows> resume_members(Context& ctx, int count,
                                 const std::function<Rows(int)>& fn) {
    const fs::path members = ctx.out / "members";
    fs::create_directories(members);
    std::vector<int> missing;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "member_%03d", i);
        if (!fs::exists(members / name / "summary_member.csv")) missing.push_back(i);
    }
    parallel_for(static_cast<int>(missing.size()), ctx.opts.workers, [&](int idx) {
        const int i = missing[static_cast<size_t>(idx)];
        char name[32];
        std::snprintf(name, sizeof(name), "member_%03d", i);
        const fs::path dir = members / name;
        fs::create_directories(dir);
        write_text_atomic(dir / "summary_member.csv", rows_to_csv(fn(i)));
    });
    std::vector<Rows> all;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "member_%03d", i);
        all.push_back(rows_from_csv_file(members / name / "summary_member.csv"));
    }
    return all;
}

void aggregate_member_stats(Context& ctx, const std::vector<Rows>& members) {
    if (members.empty()) return;
    for (size_t k = 0; k < members.front().size(); ++k) {
        const std::string& name = members.front()[k].first;
        double sum = 0.0, sumsq = 0.0;
        for (const auto& rows : members) {
            sum += rows[k].second;
            sumsq += rows[k].second * rows[k].second;
        }
        const double n = static_cast<double>(members.size());
        const double mean = sum / n;
        ctx.add_summary(name + "_mean", mean);
        if (members.size() > 1) {
            const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
            ctx.add_summary(name + "_stderr", std::sqrt(var / n));
        }
    }
}

void run_ensemble(Context& ctx) {
    const ModelSpec model = ctx.cfg.build_model();
    const Field ic = ctx.cfg.build_ic(ctx.cfg.solver.grid);
    const SolverConfig scfg = ctx.cfg.build_solver(model, ic);
    const double mass_tol = scfg.scheme == Scheme::Explicit ? 1e-12 : 1e-9;

    auto worker = [&](int member) -> Rows {
        NoisePathSpec noise = base_noise(ctx.cfg, ctx.seed, member);
        Trajectory traj = solve(scfg, model, ic, noise);
        return member_rows(traj);
    };
    const std::vector<Rows> members = resume_members(ctx, ctx.cfg.ensemble, worker);
    aggregate_member_stats(ctx, members);
    double worst_mass = 0.0;
    for (const auto& rows : members) {
        for (const auto& kv : rows)
            if (kv.first == "max_mass_residual_rel") worst_mass = std::max(worst_mass, kv.second);
    }
    ctx.diag.add_checked("mass_identity_rel", worst_mass, mass_tol);
}

void run_stability_pair(Context& ctx) {
    const ModelSpec model = ctx.cfg.build_model();
    const Field ic = ctx.cfg.build_ic(ctx.cfg.solver.grid);
    const Field ic2 = ctx.cfg.build_ic2(ctx.cfg.solver.grid);
    const SolverConfig scfg = ctx.cfg.build_solver(model, ic2);

    auto worker = [&](int member) -> Rows {
        NoisePathSpec noise = base_noise(ctx.cfg, ctx.seed, member);
        Trajectory a = solve(scfg, model, ic, noise);
        Trajectory b = solve(scfg, model, ic2, noise.couple(1));
        StabilitySeries s = l1_stability(a, b);
        Rows rows;
        rows.emplace_back("initial_distance", s.initial_distance);
        for (size_t j = 0; j < s.distance.size(); ++j) {
            char name[32];
            std::snprintf(name, sizeof(name), "distance_%05zu", j);
            rows.emplace_back(name, s.distance[j]);
        }
        return rows;
    };
    const std::vector<Rows> members = resume_members(ctx, ctx.cfg.ensemble, worker);

    // ensemble-mean distances, then the ratio of the worst time to t = 0
    const size_t cols = members.front().size();
    std::vector<double> mean_dist;
    for (size_t k = 1; k < cols; ++k) {
        double sum = 0.0;
        for (const auto& rows : members) sum += rows[k].second;
        mean_dist.push_back(sum / static_cast<double>(members.size()));
    }
    double mean_init = 0.0;
    for (const auto& rows : members) mean_init += rows[0].second;
    mean_init /= static_cast<double>(members.size());

    double sup = 0.0;
    for (double d : mean_dist) sup = std::max(sup, d);
    const double ratio = mean_init == 0.0 ? 0.0 : sup / mean_init;

    double bound;
    if (ctx.cfg.tolerance_calibrated) {
        const double lip = model.reaction.lipschitz_bound();
        const bool pure = lip == 0.0 && model.noise.mode_count() == 0;
        bound = pure ? 1.0 + 1e-6
                     : std::exp(lip * scfg.final_time) * 1.1;
    } else {
        bound = ctx.cfg.tolerance_literal;
    }
    ctx.add_summary("initial_distance", mean_init);
    ctx.add_summary("stability_ratio", ratio);
    ctx.add_summary("stability_bound", bound);
    ctx.diag.add_checked("stability_ratio", ratio, bound);
}

void run_comparison_pair(Context& ctx) {
    const ModelSpec lo = ctx.cfg.build_model();
    const ModelSpec hi = ctx.cfg.build_model2();
    const Field ic = ctx.cfg.build_ic(ctx.cfg.solver.grid);
    const SolverConfig scfg = ctx.cfg.build_solver(hi, ic);

    auto worker = [&](int member) -> Rows {
        NoisePathSpec noise = base_noise(ctx.cfg, ctx.seed, member);
        Trajectory a = solve(scfg, lo, ic, noise);
        Trajectory b = solve(scfg, hi, ic, noise.couple(1));
        double worst = -1e300;
        for (int j = 0; j < a.records(); ++j)
            for (int p = 0; p < scfg.grid.total_points(); ++p)
                worst = std::max(worst, a.states[static_cast<size_t>(j)][p] -
                                            b.states[static_cast<size_t>(j)][p]);
        Rows rows;
        rows.emplace_back("max_order_violation", worst);
        return rows;
    };
    const std::vector<Rows> members = resume_members(ctx, ctx.cfg.ensemble, worker);
    double worst = -1e300;
    for (const auto& rows : members) worst = std::max(worst, rows[0].second);
    ctx.add_summary("max_order_violation", worst);
    ctx.diag.add_checked("order_violation", worst, 1e-8);
}

void run_convergence_study(Context& ctx) {
    BarenblattParams p;
    p.m = ctx.cfg.m;
    p.dim = ctx.cfg.solver.grid.dim;
    p.mass = ctx.cfg.barenblatt_mass;
    p.t0 = ctx.cfg.barenblatt_t0;
    std::vector<int> sizes;
    for (double v : ctx.cfg.study_sizes) sizes.push_back(static_cast<int>(v));
    ConvergenceStudy study = convergence_study(p, sizes, ctx.cfg.solver.final_time,
                                               ctx.cfg.solver.cfl_safety, ctx.cfg.solver.scheme);
    std::ostringstream table;
    table << "grid,spacing,l1_error,pair_rate\n";
    for (size_t i = 0; i < study.errors.size(); ++i) {
        table << study.grid_sizes[i] << ',' << fmt(study.spacings[i]) << ','
              << fmt(study.errors[i]) << ',';
        if (i > 0) {
            const double rate = std::log(study.errors[i - 1] / study.errors[i]) /
                                std::log(study.spacings[i - 1] / study.spacings[i]);
            table << fmt(rate);
        }
        table << '\n';
        ctx.add_summary("error_n" + std::to_string(study.grid_sizes[i]), study.errors[i]);
    }
    write_text_atomic(ctx.out / "convergence.csv", table.str());
    ctx.add_summary("fitted_order", study.fitted_order);
    ctx.add_summary("errors_monotone", study.monotone ? 1.0 : 0.0);
    ctx.diag.add_checked("order_deficit", 0.5 - study.fitted_order, 0.0);
    if (ctx.opts.strict)
        ctx.diag.add_checked("errors_monotone_strict", study.monotone ? 0.0 : 1.0, 0.0);
    for (size_t i = 0; i + 1 < study.errors.size(); ++i) {
        ctx.diag.add_checked("error_decrease_pair" + std::to_string(i),
                             study.errors[i + 1] - study.errors[i], 0.0);
    }
}

void run_entropy_suite(Context& ctx) {
    const ModelSpec model = ctx.cfg.build_model();
    const Field ic = ctx.cfg.build_ic(ctx.cfg.solver.grid);
    const SolverConfig scfg = ctx.cfg.build_solver(model, ic);
    NoisePathSpec noise = base_noise(ctx.cfg, ctx.seed, 0);

    std::vector<double> schedule = ctx.cfg.eps_schedule;
    if (schedule.empty()) schedule = {scfg.eps};
    EpsilonRefinement ref = refine_epsilon(scfg, model, ic, noise, schedule);
    const Trajectory& finest = ref.trajectories.back();
    CompensationMeasure nu(finest);

    TimeCutoff cutoff(scfg.final_time, 0.5);
    Field profile = entropy_profile(scfg.grid);

    const double plus =
        entropy_residual(finest, nu, EntropyTestPack::identity(1.0, cutoff, profile)).total;
    const double minus =
        entropy_residual(finest, nu, EntropyTestPack::identity(-1.0, cutoff, profile)).total;
    const double cal = std::max(std::abs(plus), std::abs(minus));
    ctx.add_summary("residual_identity_plus", plus);
    ctx.add_summary("residual_identity_minus", minus);
    ctx.diag.add_checked("identity_antisymmetry", std::abs(plus + minus),
                         1e-12 * std::max(1.0, std::abs(plus)));

    const double tol = ctx.cfg.tolerance_calibrated ? 3.0 * cal : ctx.cfg.tolerance_literal;
    for (double delta : ctx.cfg.deltas) {
        EntropyResidual res =
            entropy_residual(finest, nu, EntropyTestPack::convex(delta, cutoff, profile));
        char short_tag[48];
        std::snprintf(short_tag, sizeof(short_tag), "residual_delta_%g", delta);
        const std::string tag = short_tag;
        ctx.add_summary(tag, res.total);
        ctx.diag.add_checked(tag + "_within_tol", res.total, tol);
    }
    ctx.add_summary("entropy_tolerance", tol);
    skorohod_identity_check(ctx, finest, nu);

    if (schedule.size() >= 2) {
        std::vector<double> defects;
        for (size_t i = 0; i < ref.trajectories.size(); ++i)
            defects.push_back(ref.trajectories[i].stats.penalty_l2_qt_sq / schedule[i]);
        for (size_t i = 0; i + 1 < defects.size(); ++i)
            ctx.diag.add_checked("defect_monotone_pair" + std::to_string(i),
                                 defects[i + 1] - defects[i], 1e-12);
        ctx.add_summary("penalty_l2_slope", fit_loglog_slope(schedule, ref.penalty_l2_qt));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Trajectory persistence

void save_trajectory(const Trajectory& traj, const ExperimentConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    const fs::path root(dir);
    write_text_atomic(root / "config.ini", cfg.serialize());

    std::ostringstream index;
    index << "record,step,time,state_file,penalty_file,state_l2,forcing_rate\n";
    for (int j = 0; j < traj.records(); ++j) {
        char sname[40], pname[40];
        std::snprintf(sname, sizeof(sname), "state_%06d.f64", j);
        std::snprintf(pname, sizeof(pname), "penalty_%06d.f64", j);
        const Field& state = traj.states[static_cast<size_t>(j)];
        const Field& nu = traj.penalty_fields[static_cast<size_t>(j)];
        save_field(state, (root / sname).string());
        save_field(nu, (root / pname).string());
        index << j << ',' << traj.step_index[static_cast<size_t>(j)] << ','
              << fmt(traj.times[static_cast<size_t>(j)]) << ',' << sname << ',' << pname << ','
              << fmt(l2_norm(state)) << ',' << fmt(l1_norm(nu)) << '\n';
    }
    write_text_atomic(root / "index.csv", index.str());

    Rows stats;
    stats.emplace_back("dt", traj.config.dt);
    stats.emplace_back("final_time", traj.config.final_time);
    stats.emplace_back("eps", traj.config.eps);
    stats.emplace_back("level", traj.config.level);
    stats.emplace_back("record_stride", traj.config.record_stride);
    stats.emplace_back("coeff_range", traj.config.coeff_range);
    stats.emplace_back("scheme", traj.config.scheme == Scheme::Explicit ? 0.0 : 1.0);
    stats.emplace_back("noise_seed", static_cast<double>(traj.noise_spec.seed));
    stats.emplace_back("noise_trajectory", static_cast<double>(traj.noise_spec.trajectory_id));
    stats.emplace_back("noise_modes", traj.noise_spec.mode_count);
    stats.emplace_back("noise_steps", traj.noise_spec.step_count);
    stats.emplace_back("max_mass_residual_rel", traj.stats.max_mass_residual_rel);
    stats.emplace_back("min_penalty_increment", traj.stats.min_penalty_increment);
    stats.emplace_back("max_contraction_excess", traj.stats.max_contraction_excess);
    stats.emplace_back("sup_l2_sq", traj.stats.sup_l2_sq);
    stats.emplace_back("sup_lmp1", traj.stats.sup_lmp1);
    stats.emplace_back("penalty_l2_qt_sq", traj.stats.penalty_l2_qt_sq);
    stats.emplace_back("penalty_l1_qt", traj.stats.penalty_l1_qt);
    stats.emplace_back("grad_bracket_sqrt_qt", traj.stats.grad_bracket_sqrt_qt);
    stats.emplace_back("grad_phi_qt", traj.stats.grad_phi_qt);
    stats.emplace_back("weighted_violation_qt", traj.stats.weighted_violation_qt);
    write_text_atomic(root / "stats.csv", rows_to_csv(stats));
}

Trajectory load_trajectory(const std::string& dir) {
    const fs::path root(dir);
    const ExperimentConfig cfg = ExperimentConfig::parse_file((root / "config.ini").string());
    const Rows stats = rows_from_csv_file(root / "stats.csv");
    auto stat = [&](const std::string& name) {
        for (const auto& kv : stats)
            if (kv.first == name) return kv.second;
        throw std::runtime_error("trajectory stats missing " + name);
    };

    Trajectory traj;
    traj.model = cfg.build_model();
    traj.config = cfg.solver;
    traj.config.dt = stat("dt");
    traj.config.final_time = stat("final_time");
    traj.config.eps = stat("eps");
    traj.config.level = static_cast<int>(stat("level"));
    traj.config.record_stride = static_cast<int>(stat("record_stride"));
    traj.config.coeff_range = stat("coeff_range");
    traj.config.scheme = stat("scheme") == 0.0 ? Scheme::Explicit : Scheme::SemiImplicitDiffusion;
    traj.noise_spec.seed = static_cast<std::uint64_t>(stat("noise_seed"));
    traj.noise_spec.trajectory_id = static_cast<std::uint64_t>(stat("noise_trajectory"));
    traj.noise_spec.mode_count = static_cast<int>(stat("noise_modes"));
    traj.noise_spec.step_count = static_cast<int>(stat("noise_steps"));
    traj.noise_spec.dt = traj.config.dt;
    traj.stats.max_mass_residual_rel = stat("max_mass_residual_rel");
    traj.stats.min_penalty_increment = stat("min_penalty_increment");
    traj.stats.max_contraction_excess = stat("max_contraction_excess");
    traj.stats.sup_l2_sq = stat("sup_l2_sq");
    traj.stats.sup_lmp1 = stat("sup_lmp1");
    traj.stats.penalty_l2_qt_sq = stat("penalty_l2_qt_sq");
    traj.stats.penalty_l1_qt = stat("penalty_l1_qt");
    traj.stats.grad_bracket_sqrt_qt = stat("grad_bracket_sqrt_qt");
    traj.stats.grad_phi_qt = stat("grad_phi_qt");
    traj.stats.weighted_violation_qt = stat("weighted_violation_qt");

    std::ifstream index(root / "index.csv");
    if (!index) throw std::runtime_error("cannot read trajectory index in " + dir);
    std::string line;
    std::getline(index, line);
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string rec, step, time, sfile, pfile;
        std::getline(row, rec, ',');
        std::getline(row, step, ',');
        std::getline(row, time, ',');
        std::getline(row, sfile, ',');
        std::getline(row, pfile, ',');
        traj.step_index.push_back(std::stol(step));
        traj.times.push_back(std::stod(time));
        traj.states.push_back(load_field((root / sfile).string(), traj.config.grid));
        traj.penalty_fields.push_back(load_field((root / pfile).string(), traj.config.grid));
    }
    if (traj.times.empty()) throw std::runtime_error("trajectory store is empty in " + dir);
    return traj;
}

// ---------------------------------------------------------------------------

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    const auto t_start = std::chrono::steady_clock::now();

    std::string out = opts.out_dir;
    if (out.empty()) {
        if (const char* env = std::getenv(kOutDirEnv)) out = env;
    }
    if (out.empty()) out = cfg.out_dir;
    if (out.empty()) throw ConfigError("no output directory: set experiment.out, --out, or $" +
                                       std::string(kOutDirEnv));

    Context ctx{cfg, opts, fs::path(out), opts.seed_override.value_or(cfg.seed), {}, {}};
    fs::create_directories(ctx.out);
    write_text_atomic(ctx.out / "config.ini", cfg.serialize());

    switch (cfg.kind) {
        case ExperimentKind::Single: run_single(ctx); break;
        case ExperimentKind::RefineEps: run_refine_eps(ctx); break;
        case ExperimentKind::Ensemble: run_ensemble(ctx); break;
        case ExperimentKind::StabilityPair: run_stability_pair(ctx); break;
        case ExperimentKind::ComparisonPair: run_comparison_pair(ctx); break;
        case ExperimentKind::ConvergenceStudy: run_convergence_study(ctx); break;
        case ExperimentKind::EntropySuite: run_entropy_suite(ctx); break;
    }

    // fingerprint from the canonical config + seed
    {
        std::uint64_t h = 1469598103934665603ull;
        for (char c : cfg.serialize()) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        h ^= ctx.seed;
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        ctx.diag.config_fingerprint = buf;
    }

    write_text_atomic(ctx.out / "summary.csv", rows_to_csv(ctx.summary));
    {
        std::ostringstream csv;
        ctx.diag.write_csv(csv);
        write_text_atomic(ctx.out / "diagnostics.csv", csv.str());
        write_text_atomic(ctx.out / "diagnostics.json", ctx.diag.to_json());
    }
    {
        const auto wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        std::ostringstream prov;
        prov << "version = " << kVersion << "\n"
             << "kind = " << to_string(cfg.kind) << "\n"
             << "seed = " << ctx.seed << "\n"
             << "workers = " << opts.workers << "\n"
             << "wall_seconds = " << wall << "\n";
        write_text_atomic(ctx.out / "provenance.txt", prov.str());
    }

    RunResult result;
    result.out_dir = ctx.out.string();
    result.diagnostics = ctx.diag;
    result.summary = ctx.summary;
    result.exit_code = ctx.diag.all_pass() ? 0 : 1;
    return result;
}

RunResult sweep(const ExperimentConfig& cfg, const std::string& axis,
                const std::vector<double>& values, const RunOptions& opts) {
    const auto dot = axis.find('.');
    if (dot == std::string::npos)
        throw ConfigError("sweep axis must be section.key, got '" + axis + "'");
    const std::string section = axis.substr(0, dot);
    const std::string key = axis.substr(dot + 1);
    if (values.empty()) throw ConfigError("sweep: no values given");

    std::string out = opts.out_dir;
    if (out.empty()) {
        if (const char* env = std::getenv(kOutDirEnv)) out = env;
    }
    if (out.empty()) out = cfg.out_dir;
    if (out.empty()) throw ConfigError("sweep: no output directory");
    fs::create_directories(out);

    std::vector<RunResult> results(values.size());
    parallel_for(static_cast<int>(values.size()), opts.workers, [&](int i) {
        KeyValueConfig raw = cfg.raw;
        raw.set_number(section, key, values[static_cast<size_t>(i)]);
        ExperimentConfig sub = ExperimentConfig::parse(raw.serialize());
        RunOptions sub_opts = opts;
        sub_opts.workers = 1;
        char name[48];
        std::snprintf(name, sizeof(name), "sweep_%02d", i);
        sub_opts.out_dir = (fs::path(out) / name).string();
        results[static_cast<size_t>(i)] = run_experiment(sub, sub_opts);
    });

    std::ostringstream agg;
    agg << "value,name,entry\n";
    RunResult combined;
    combined.out_dir = out;
    combined.exit_code = 0;
    for (size_t i = 0; i < values.size(); ++i) {
        for (const auto& kv : results[i].summary)
            agg << fmt(values[i]) << ',' << kv.first << ',' << fmt(kv.second) << '\n';
        combined.exit_code = std::max(combined.exit_code, results[i].exit_code);
        for (const auto& e : results[i].diagnostics.entries) {
            ReportEntry copy = e;
            copy.name = "v" + std::to_string(i) + "_" + copy.name;
            combined.diagnostics.entries.push_back(copy);
        }
    }
    write_text_atomic(fs::path(out) / "aggregate.csv", agg.str());
    combined.summary.emplace_back("runs", static_cast<double>(values.size()));
    return combined;
}

DiagnosticsReport replay(const std::string& artifact_dir) {
    const fs::path root(artifact_dir);
    DiagnosticsReport rep;
    std::vector<fs::path> traj_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && entry.path().filename().string().rfind("trajectory", 0) == 0)
            traj_dirs.push_back(entry.path());
    }
    std::sort(traj_dirs.begin(), traj_dirs.end());
    if (traj_dirs.empty())
        throw ConfigError("replay: no trajectory stores under " + artifact_dir);
    for (const auto& dir : traj_dirs) {
        Trajectory traj = load_trajectory(dir.string());
        const std::string prefix = dir.filename().string() + "_";
        CompensationMeasure nu(traj);
        const double defect = skorohod_defect(traj, nu);
        double l2sq = 0.0;
        const TorusGrid& g = traj.config.grid;
        for (int j = 1; j < traj.records(); ++j) {
            Field psi = traj.model.obstacle.sample(g, traj.times[static_cast<size_t>(j)]);
            const double w = traj.record_weight(j) * g.cell_volume();
            for (int p = 0; p < g.total_points(); ++p) {
                const double v = std::max(psi[p] - traj.states[static_cast<size_t>(j)][p], 0.0);
                l2sq += w * v * v;
            }
        }
        const double scale = std::max({defect, l2sq / traj.config.eps, 1e-30});
        rep.add_checked(prefix + "skorohod_identity_rel",
                        std::abs(defect - l2sq / traj.config.eps) / scale, 1e-12);
        rep.add(prefix + "measure_mass", nu.total_mass());
        DiagnosticsReport monitors = apriori_monitor(traj);
        for (const auto& e : monitors.entries) rep.add(prefix + e.name, e.value);
        rep.add_checked(prefix + "mass_identity_rel", traj.stats.max_mass_residual_rel,
                        traj.config.scheme == Scheme::Explicit ? 1e-12 : 1e-9);
    }
    {
        std::ostringstream csv;
        rep.write_csv(csv);
        write_text_atomic(root / "diagnostics_replay.csv", csv.str());
        write_text_atomic(root / "diagnostics_replay.json", rep.to_json());
    }
    return rep;
}

}  // namespace pmob
