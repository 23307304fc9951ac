#pragma once

#include <random>

#include "pmob/grid.hpp"
#include "pmob/solver.hpp"

namespace pmob::test {

inline Field random_field(const TorusGrid& g, std::mt19937_64& rng, double lo = -1.0,
                          double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Field f(g);
    for (int p = 0; p < g.total_points(); ++p) f[p] = dist(rng);
    return f;
}

inline VectorField random_vector_field(const TorusGrid& g, std::mt19937_64& rng) {
    VectorField F(g);
    for (int i = 0; i < g.dim; ++i) F.component(i) = random_field(g, rng);
    return F;
}

inline Field sampled(const TorusGrid& g, const std::function<double(double, double)>& f) {
    Field out(g);
    for (int p = 0; p < g.total_points(); ++p) {
        const auto xy = g.coords(p);
        out[p] = f(xy[0], xy[1]);
    }
    return out;
}

/// Smallest dt fitting final_time with the explicit stability bound.
inline double pick_dt(const SolverConfig& cfg, const ModelSpec& model, double r_window) {
    const double bound = SolverConfig::stable_dt(model, cfg.grid, r_window, cfg.cfl_safety);
    return SolverConfig::fitted_dt(cfg.final_time, bound);
}

}  // namespace pmob::test
