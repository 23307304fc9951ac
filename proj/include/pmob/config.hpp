#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pmob/model.hpp"
#include "pmob/sde.hpp"
#include "pmob/solver.hpp"

namespace pmob {

/// Sectioned key-value text: `[section]` headers, `key = value` lines,
/// `#` comments. Parsing and serialization are canonical, so
/// parse(serialize(parse(text))) == parse(text).
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig parse_file(const std::string& path);
    std::string serialize() const;

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_number(const std::string& section, const std::string& key) const;
    double get_number_or(const std::string& section, const std::string& key,
                         double fallback) const;
    long get_integer_or(const std::string& section, const std::string& key, long fallback) const;
    std::vector<double> get_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_list_or(const std::string& section, const std::string& key,
                                    const std::vector<double>& fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    void set_number(const std::string& section, const std::string& key, double value);

    bool operator==(const KeyValueConfig& o) const;
    const std::vector<std::string>& section_order() const { return order_; }
    std::vector<std::string> keys(const std::string& section) const;

private:
    // sections in first-seen order, keys in first-seen order
    std::vector<std::string> order_;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections_;
};

enum class ExperimentKind {
    Single,
    RefineEps,
    Ensemble,
    StabilityPair,
    ComparisonPair,
    ConvergenceStudy,
    EntropySuite,
};

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from(const std::string& s);

/// Fully validated experiment description; every coefficient family named in
/// the file must exist in the registries, schedules must be monotone.
struct ExperimentConfig {
    KeyValueConfig raw;

    // model
    double m = 2.0;
    double K = 3.0;
    double kappa = 1.0;
    std::string obstacle_family = "none";
    std::vector<double> obstacle_params;
    std::string reaction_family = "none";
    std::vector<double> reaction_params;
    std::string reaction2_family = "none";  // comparison pairs
    std::vector<double> reaction2_params;
    std::string noise_family = "none";
    std::vector<double> noise_params;
    int noise_modes = 0;
    std::string ic_family = "constant";
    std::vector<double> ic_params = {0.0};
    std::string ic2_family;  // stability pairs
    std::vector<double> ic2_params;

    // solver
    SolverConfig solver;
    bool dt_auto = false;
    std::vector<double> eps_schedule;

    // experiment
    ExperimentKind kind = ExperimentKind::Single;
    int ensemble = 1;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::vector<double> study_sizes;  // convergence study grids
    double barenblatt_mass = 0.165;
    double barenblatt_t0 = 0.015;

    // diagnostics
    std::vector<double> deltas = {1.0, 0.1, 0.01};
    std::vector<double> taus;    // empty = auto {T/4, T/16, T/64}
    bool tolerance_calibrated = true;
    double tolerance_literal = 0.0;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
    std::string serialize() const;

    ModelSpec build_model() const;
    ModelSpec build_model2() const;  // comparison partner (reaction2)
    Field build_ic(const TorusGrid& g) const;
    Field build_ic2(const TorusGrid& g) const;
    /// Solver config with dt resolved (auto -> CFL-fitted for this data).
    SolverConfig build_solver(const ModelSpec& model, const Field& ic) const;
};

/// Initial-condition families shared by the config and the tests.
Field make_initial(const std::string& family, const std::vector<double>& params,
                   const TorusGrid& g);

}  // namespace pmob
