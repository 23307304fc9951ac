#include "pmob/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pmob/validation.hpp"

namespace pmob {

namespace {
std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_number(const std::string& where, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse number from '" + v + "'");
    }
}
}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
            if (!cfg.sections_.count(section)) {
                cfg.order_.push_back(section);
                cfg.sections_[section] = {};
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        auto& entries = cfg.sections_[section];
        for (auto& kv : entries) {
            if (kv.first == key) throw ConfigError("config: duplicate key " + section + "." + key);
        }
        entries.emplace_back(key, value);
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string KeyValueConfig::serialize() const {
    std::ostringstream out;
    for (const auto& s : order_) {
        out << '[' << s << "]\n";
        for (const auto& kv : sections_.at(s)) out << kv.first << " = " << kv.second << '\n';
        out << '\n';
    }
    return out.str();
}

bool KeyValueConfig::has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return false;
    for (const auto& kv : it->second)
        if (kv.first == key) return true;
    return false;
}

std::string KeyValueConfig::get(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it != sections_.end()) {
        for (const auto& kv : it->second)
            if (kv.first == key) return kv.second;
    }
    throw ConfigError("config: missing required field " + section + "." + key);
}

std::string KeyValueConfig::get_or(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
}

double KeyValueConfig::get_number(const std::string& section, const std::string& key) const {
    return parse_number(section + "." + key, get(section, key));
}

double KeyValueConfig::get_number_or(const std::string& section, const std::string& key,
                                     double fallback) const {
    return has(section, key) ? get_number(section, key) : fallback;
}

long KeyValueConfig::get_integer_or(const std::string& section, const std::string& key,
                                    long fallback) const {
    if (!has(section, key)) return fallback;
    const double v = get_number(section, key);
    const long n = std::lround(v);
    if (std::abs(v - static_cast<double>(n)) > 1e-9)
        throw ConfigError("config: " + section + "." + key + " must be an integer");
    return n;
}

std::vector<double> KeyValueConfig::get_list(const std::string& section,
                                             const std::string& key) const {
    const std::string raw = get(section, key);
    std::vector<double> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_number(section + "." + key, item));
    }
    return out;
}

std::vector<double> KeyValueConfig::get_list_or(const std::string& section, const std::string& key,
                                                const std::vector<double>& fallback) const {
    return has(section, key) ? get_list(section, key) : fallback;
}

void KeyValueConfig::set(const std::string& section, const std::string& key,
                         const std::string& value) {
    if (!sections_.count(section)) {
        order_.push_back(section);
        sections_[section] = {};
    }
    for (auto& kv : sections_[section]) {
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    }
    sections_[section].emplace_back(key, value);
}

void KeyValueConfig::set_number(const std::string& section, const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(section, key, buf);
}

bool KeyValueConfig::operator==(const KeyValueConfig& o) const {
    return order_ == o.order_ && sections_ == o.sections_;
}

std::vector<std::string> KeyValueConfig::keys(const std::string& section) const {
    std::vector<std::string> out;
    const auto it = sections_.find(section);
    if (it != sections_.end())
        for (const auto& kv : it->second) out.push_back(kv.first);
    return out;
}

// ---------------------------------------------------------------------------

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Single: return "single";
        case ExperimentKind::RefineEps: return "refine-eps";
        case ExperimentKind::Ensemble: return "ensemble";
        case ExperimentKind::StabilityPair: return "stability-pair";
        case ExperimentKind::ComparisonPair: return "comparison-pair";
        case ExperimentKind::ConvergenceStudy: return "convergence-study";
        case ExperimentKind::EntropySuite: return "entropy-suite";
    }
    return "single";
}

ExperimentKind experiment_kind_from(const std::string& s) {
    for (ExperimentKind k :
         {ExperimentKind::Single, ExperimentKind::RefineEps, ExperimentKind::Ensemble,
          ExperimentKind::StabilityPair, ExperimentKind::ComparisonPair,
          ExperimentKind::ConvergenceStudy, ExperimentKind::EntropySuite}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("experiment.kind: unknown kind '" + s + "'");
}

Field make_initial(const std::string& family, const std::vector<double>& params,
                   const TorusGrid& g) {
    auto need = [&](size_t k) {
        if (params.size() < k)
            throw ConfigError("initial condition " + family + ": expected " + std::to_string(k) +
                              " parameters, got " + std::to_string(params.size()));
    };
    Field f(g);
    if (family == "constant") {
        need(1);
        for (int p = 0; p < g.total_points(); ++p) f[p] = params[0];
        return f;
    }
    if (family == "cosine") {
        need(2);  // a + b cos(2 pi x) [* cos(2 pi y)]
        for (int p = 0; p < g.total_points(); ++p) {
            const auto xy = g.coords(p);
            double v = params[0] + params[1] * std::cos(2.0 * M_PI * xy[0]);
            if (g.dim == 2) v = params[0] + params[1] * std::cos(2.0 * M_PI * xy[0]) *
                                                std::cos(2.0 * M_PI * xy[1]);
            f[p] = v;
        }
        return f;
    }
    if (family == "neg_cosine") {
        need(2);
        for (int p = 0; p < g.total_points(); ++p) {
            const auto xy = g.coords(p);
            f[p] = params[0] - params[1] * std::cos(2.0 * M_PI * xy[0]);
        }
        return f;
    }
    if (family == "bump") {
        need(4);  // base, amp, center, width
        Obstacle b = Obstacle::bump(params[0], params[1], params[2], params[3]);
        return b.sample(g, 0.0);
    }
    if (family == "barenblatt") {
        need(2);  // mass, t0
        BarenblattParams bp;
        bp.dim = g.dim;
        bp.mass = params[0];
        bp.t0 = params[1];
        if (params.size() > 2) bp.m = params[2];
        return barenblatt_field(g, 0.0, bp);
    }
    throw ConfigError("unknown initial condition family: " + family);
}

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig c;
    c.raw = KeyValueConfig::parse(text);
    const KeyValueConfig& r = c.raw;

    // reject unknown sections/keys so typos surface as named errors
    static const std::map<std::string, std::vector<std::string>> known = {
        {"model",
         {"m", "K", "kappa", "obstacle", "obstacle_params", "reaction", "reaction_params",
          "reaction2", "reaction2_params", "noise", "noise_params", "noise_modes", "ic",
          "ic_params", "ic2", "ic2_params"}},
        {"solver",
         {"dim", "points", "final_time", "dt", "cfl_safety", "eps", "eps_schedule", "scheme",
          "record_stride", "coeff_range", "level"}},
        {"experiment",
         {"kind", "ensemble", "seed", "out", "grids", "barenblatt_mass", "barenblatt_t0"}},
        {"diagnostics", {"deltas", "taus", "tolerance"}},
    };
    for (const auto& s : r.section_order()) {
        const auto it = known.find(s);
        if (it == known.end()) throw ConfigError("config: unknown section [" + s + "]");
        for (const auto& k : r.keys(s)) {
            if (std::find(it->second.begin(), it->second.end(), k) == it->second.end())
                throw ConfigError("config: unknown field " + s + "." + k);
        }
    }

    c.m = r.get_number_or("model", "m", 2.0);
    c.K = r.get_number_or("model", "K", 3.0);
    c.kappa = r.get_number_or("model", "kappa", 1.0);
    c.obstacle_family = r.get_or("model", "obstacle", "none");
    c.obstacle_params = r.get_list_or("model", "obstacle_params", {});
    c.reaction_family = r.get_or("model", "reaction", "none");
    c.reaction_params = r.get_list_or("model", "reaction_params", {});
    c.reaction2_family = r.get_or("model", "reaction2", "none");
    c.reaction2_params = r.get_list_or("model", "reaction2_params", {});
    c.noise_family = r.get_or("model", "noise", "none");
    c.noise_params = r.get_list_or("model", "noise_params", {});
    c.noise_modes = static_cast<int>(r.get_integer_or("model", "noise_modes", 0));
    c.ic_family = r.get_or("model", "ic", "constant");
    c.ic_params = r.get_list_or("model", "ic_params", {0.0});
    c.ic2_family = r.get_or("model", "ic2", "");
    c.ic2_params = r.get_list_or("model", "ic2_params", {});

    const int dim = static_cast<int>(r.get_integer_or("solver", "dim", 1));
    const int points = static_cast<int>(r.get_integer_or("solver", "points", 64));
    c.solver.grid = TorusGrid(dim, points);
    c.solver.final_time = r.get_number_or("solver", "final_time", 0.5);
    const std::string dt_raw = r.get_or("solver", "dt", "auto");
    if (dt_raw == "auto") {
        c.dt_auto = true;
    } else {
        c.solver.dt = parse_number("solver.dt", dt_raw);
    }
    c.solver.cfl_safety = r.get_number_or("solver", "cfl_safety", 0.9);
    c.solver.eps = r.get_number_or("solver", "eps", 1e-3);
    c.eps_schedule = r.get_list_or("solver", "eps_schedule", {});
    for (size_t i = 0; i + 1 < c.eps_schedule.size(); ++i) {
        if (!(c.eps_schedule[i] > c.eps_schedule[i + 1]))
            throw ConfigError("solver.eps_schedule must be strictly decreasing");
    }
    const std::string scheme = r.get_or("solver", "scheme", "explicit");
    if (scheme == "explicit") c.solver.scheme = Scheme::Explicit;
    else if (scheme == "semi-implicit") c.solver.scheme = Scheme::SemiImplicitDiffusion;
    else throw ConfigError("solver.scheme: unknown scheme '" + scheme + "'");
    c.solver.record_stride = static_cast<int>(r.get_integer_or("solver", "record_stride", 1));
    c.solver.coeff_range = r.get_number_or("solver", "coeff_range", 0.0);
    c.solver.level = static_cast<int>(r.get_integer_or("solver", "level", 1));

    c.kind = experiment_kind_from(r.get_or("experiment", "kind", "single"));
    c.ensemble = static_cast<int>(r.get_integer_or("experiment", "ensemble", 1));
    if (c.ensemble < 1) throw ConfigError("experiment.ensemble must be >= 1");
    const double seed_raw = r.get_number_or("experiment", "seed", 0.0);
    c.seed = static_cast<std::uint64_t>(seed_raw);
    c.out_dir = r.get_or("experiment", "out", "");
    c.study_sizes = r.get_list_or("experiment", "grids", {});
    for (size_t i = 0; i + 1 < c.study_sizes.size(); ++i) {
        if (!(c.study_sizes[i] < c.study_sizes[i + 1]))
            throw ConfigError("experiment.grids must be strictly increasing");
    }
    c.barenblatt_mass = r.get_number_or("experiment", "barenblatt_mass", 0.165);
    c.barenblatt_t0 = r.get_number_or("experiment", "barenblatt_t0", 0.015);

    c.deltas = r.get_list_or("diagnostics", "deltas", {1.0, 0.1, 0.01});
    const std::string taus = r.get_or("diagnostics", "taus", "auto");
    if (taus != "auto") c.taus = r.get_list("diagnostics", "taus");
    const std::string tol = r.get_or("diagnostics", "tolerance", "calibrated");
    if (tol == "calibrated") {
        c.tolerance_calibrated = true;
    } else {
        c.tolerance_calibrated = false;
        c.tolerance_literal = parse_number("diagnostics.tolerance", tol);
    }

    // families must resolve now, not at run time
    (void)c.build_model();
    if (c.kind == ExperimentKind::ComparisonPair) (void)c.build_model2();
    (void)make_initial(c.ic_family, c.ic_params, c.solver.grid);
    if (c.kind == ExperimentKind::StabilityPair) {
        if (c.ic2_family.empty())
            throw ConfigError("stability-pair requires model.ic2 / model.ic2_params");
        (void)make_initial(c.ic2_family, c.ic2_params, c.solver.grid);
    }
    if (c.kind == ExperimentKind::RefineEps && c.eps_schedule.empty())
        throw ConfigError("refine-eps requires solver.eps_schedule");
    if (c.kind == ExperimentKind::ConvergenceStudy && c.study_sizes.size() < 2)
        throw ConfigError("convergence-study requires experiment.grids with at least 2 sizes");
    return c;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string ExperimentConfig::serialize() const { return raw.serialize(); }

ModelSpec ExperimentConfig::build_model() const {
    ModelSpec model;
    model.flux = FluxFunction(Nonlinearity(m, K, kappa), solver.level);
    model.obstacle = Obstacle::from_config(obstacle_family, obstacle_params);
    model.reaction = Reaction::from_config(reaction_family, reaction_params);
    model.noise =
        NoiseModel::from_config(noise_family, noise_params, noise_modes, solver.grid.dim);
    return model;
}

ModelSpec ExperimentConfig::build_model2() const {
    ModelSpec model = build_model();
    model.reaction = Reaction::from_config(reaction2_family, reaction2_params);
    return model;
}

Field ExperimentConfig::build_ic(const TorusGrid& g) const {
    return make_initial(ic_family, ic_params, g);
}

Field ExperimentConfig::build_ic2(const TorusGrid& g) const {
    return make_initial(ic2_family, ic2_params, g);
}

SolverConfig ExperimentConfig::build_solver(const ModelSpec& model, const Field& ic) const {
    SolverConfig cfg = solver;
    if (dt_auto && cfg.final_time > 0.0) {
        const double bound = SolverConfig::stable_dt(
            model, cfg.grid, default_coeff_range(cfg, model, ic), cfg.cfl_safety);
        cfg.dt = SolverConfig::fitted_dt(cfg.final_time, bound);
    }
    return cfg;
}

}  // namespace pmob
