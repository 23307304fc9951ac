#include "pmob/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "pmob/numerics.hpp"

namespace pmob {

// ---------------------------------------------------------------------------
// Nonlinearity

Nonlinearity::Nonlinearity(double m_, double K, double kappa)
    : m(m_), structure_constant(K), holder_exponent(kappa) {
    if (m <= 1.0) throw ConfigError("Nonlinearity: m must exceed 1");
    if (K < 1.0) throw ConfigError("Nonlinearity: K must be >= 1");
    if (kappa <= 0.0 || kappa > 1.0) throw ConfigError("Nonlinearity: kappa must lie in (0, 1]");
}

double Nonlinearity::phi(double r) const {
    return std::copysign(std::pow(std::abs(r), m), r);
}

double Nonlinearity::phi_prime(double r) const { return m * std::pow(std::abs(r), m - 1.0); }

double Nonlinearity::sqrt_phi_prime(double r) const {
    return std::sqrt(m) * std::pow(std::abs(r), 0.5 * (m - 1.0));
}

double Nonlinearity::bracket_sqrt(double r) const {
    const double p = 0.5 * (m + 1.0);
    return std::copysign(std::sqrt(m) / p * std::pow(std::abs(r), p), r);
}

// ---------------------------------------------------------------------------
// SmoothedNonlinearity

SmoothedNonlinearity::SmoothedNonlinearity(const Nonlinearity& base, int level)
    : base_(base), level_(level) {
    if (level < 1) throw ConfigError("SmoothedNonlinearity: level must be >= 1");
    const double n = static_cast<double>(level_);
    floor_ = 2.0 / n;
    clamp_radius_ = n + 1.0;
    cap_ = base_.sqrt_phi_prime(clamp_radius_) + 1.0;  // never binds on the clamp range

    // Kernel: two 16-point panels of the canonical bump on (0, 1), weights
    // normalized to unit sum so constants mollify exactly.
    const Mollifier& rho = Mollifier::instance();
    for (int panel = 0; panel < 2; ++panel) {
        const double a = 0.5 * panel, b = a + 0.5;
        for (int q = 0; q < GaussLegendre16::kPoints; ++q) {
            const double sgm = 0.5 * (a + b) + 0.25 * GaussLegendre16::nodes[q];
            kern_off_.push_back(sgm);
            kern_w_.push_back(0.25 * GaussLegendre16::weights[q] * rho(sgm));
        }
    }
    CompensatedSum wsum;
    for (double w : kern_w_) wsum.add(w);
    for (double& w : kern_w_) w /= wsum.value();

    // Mollification scale: start from the modulus-of-continuity estimate and
    // halve until the sampled deviation from sqrt(phi') on [-n, n] is below
    // 1.5/n. With the 2/n uplift the total stays below 4/n.
    const double target = 1.5 / n;
    const double m = base_.m;
    const double cusp = std::min(1.0, 0.5 * (m - 1.0));
    double guess = std::pow(target / std::sqrt(m), 1.0 / cusp);
    if (m > 3.0) {
        const double edge_slope =
            std::sqrt(m) * 0.5 * (m - 1.0) * std::pow(clamp_radius_, 0.5 * (m - 3.0));
        guess = std::min(guess, target / edge_slope);
    }
    delta_ = std::min(1.0 / n, guess);

    auto deviation = [&]() {
        double worst = 0.0;
        const int coarse = 2048;
        for (int i = 0; i <= coarse; ++i) {
            const double r = n * i / coarse;
            worst = std::max(worst, std::abs(sqrt_phi_prime(r) - floor_ - base_.sqrt_phi_prime(r)));
        }
        // geometric refinement toward the cusp at the origin
        for (double r = n; r > 1e-9; r *= 0.5) {
            worst = std::max(worst, std::abs(sqrt_phi_prime(r) - floor_ - base_.sqrt_phi_prime(r)));
        }
        return worst;
    };
    for (int rounds = 0; deviation() > target; ++rounds) {
        if (rounds > 60)
            throw std::runtime_error("SmoothedNonlinearity: mollification scale search failed");
        delta_ *= 0.5;
    }
}

double SmoothedNonlinearity::capped_base(double r) const {
    const double rc = std::clamp(r, -clamp_radius_, clamp_radius_);
    return std::min(base_.sqrt_phi_prime(rc), cap_);
}

double SmoothedNonlinearity::sqrt_phi_prime(double r) const {
    // Symmetric mollification: even in r exactly, so phi_n stays odd.
    CompensatedSum s;
    for (size_t q = 0; q < kern_off_.size(); ++q) {
        const double o = delta_ * kern_off_[q];
        s.add(0.5 * kern_w_[q] * (capped_base(r - o) + capped_base(r + o)));
    }
    return floor_ + s.value();
}

void SmoothedNonlinearity::build_tables() const {
    tab_rmax_ = clamp_radius_ + 1.0;
    tab_step_ = std::min(0.5 * delta_, 0.01);
    const int nodes = static_cast<int>(std::ceil(tab_rmax_ / tab_step_)) + 1;
    tab_dphi_.resize(nodes);
    tab_phi_.resize(nodes);
    tab_bracket_.resize(nodes);
    std::vector<double> sq(nodes);
    for (int i = 0; i < nodes; ++i) {
        sq[i] = sqrt_phi_prime(i * tab_step_);
        tab_dphi_[i] = sq[i] * sq[i];
    }
    CompensatedSum accp, accb;
    tab_phi_[0] = 0.0;
    tab_bracket_[0] = 0.0;
    for (int i = 1; i < nodes; ++i) {
        accp.add(0.5 * tab_step_ * (tab_dphi_[i - 1] + tab_dphi_[i]));
        accb.add(0.5 * tab_step_ * (sq[i - 1] + sq[i]));
        tab_phi_[i] = accp.value();
        tab_bracket_[i] = accb.value();
    }
}

namespace {
// antiderivative lookup with piecewise-linear integrand: exact on the table
// nodes, quadratic in between, strictly increasing for positive integrands
double cumulative_eval(const std::vector<double>& cum, const std::vector<double>& integrand,
                       double step, double rmax, double y) {
    if (y >= rmax) {
        const size_t last = cum.size() - 1;
        return cum[last] + integrand[last] * (y - rmax);
    }
    const double s = y / step;
    size_t i = static_cast<size_t>(s);
    if (i + 1 >= cum.size()) i = cum.size() - 2;
    const double frac = s - static_cast<double>(i);
    const double d0 = integrand[i], d1 = integrand[i + 1];
    return cum[i] + step * frac * (d0 + 0.5 * frac * (d1 - d0));
}
}  // namespace

double SmoothedNonlinearity::phi(double r) const {
    std::call_once(tables_once_, [this] { build_tables(); });
    return std::copysign(cumulative_eval(tab_phi_, tab_dphi_, tab_step_, tab_rmax_, std::abs(r)),
                         r);
}

double SmoothedNonlinearity::bracket_sqrt(double r) const {
    std::call_once(tables_once_, [this] { build_tables(); });
    // integrand values are sqrt(phi'), reconstructed from the stored squares
    const double y = std::abs(r);
    if (y >= tab_rmax_) {
        const double tail = std::sqrt(tab_dphi_.back()) * (y - tab_rmax_);
        return std::copysign(tab_bracket_.back() + tail, r);
    }
    const double s = y / tab_step_;
    size_t i = static_cast<size_t>(s);
    if (i + 1 >= tab_bracket_.size()) i = tab_bracket_.size() - 2;
    const double frac = s - static_cast<double>(i);
    const double d0 = std::sqrt(tab_dphi_[i]), d1 = std::sqrt(tab_dphi_[i + 1]);
    const double v = tab_bracket_[i] + tab_step_ * frac * (d0 + 0.5 * frac * (d1 - d0));
    return std::copysign(v, r);
}

double SmoothedNonlinearity::phi_prime_max() const {
    const double top = floor_ + cap_;
    return top * top;
}

// ---------------------------------------------------------------------------
// FluxFunction

FluxFunction::FluxFunction(const Nonlinearity& base, int level) : base_(base), level_(level) {
    if (level_ < 0) throw ConfigError("FluxFunction: level must be >= 0");
    if (level_ > 0) smoothed_ = std::make_shared<SmoothedNonlinearity>(base_, level_);
}

double FluxFunction::phi_prime_bound(double r_range) const {
    if (!smoothed_) return base_.phi_prime(r_range);
    double worst = 0.0;
    const int samples = 1024;
    for (int i = 0; i <= samples; ++i) {
        worst = std::max(worst, smoothed_->phi_prime(r_range * i / samples));
    }
    return std::min(1.05 * worst, smoothed_->phi_prime_max());
}

// ---------------------------------------------------------------------------
// Obstacle

namespace {
double torus_dist(double x, double c) {
    double d = std::abs(x - c);
    d -= std::floor(d);
    return std::min(d, 1.0 - d);
}

// C^3 compactly supported bump, max 1 at the center, zero outside width/2.
double quartic_bump(double x, double center, double width) {
    const double u = torus_dist(x, center);
    const double hw = 0.5 * width;
    if (u >= hw) return 0.0;
    const double c = std::cos(0.5 * M_PI * u / hw);
    return c * c * c * c;
}

// flat top of half-width w_flat, quartic decay to zero at half-width w_out
double plateau_bump(double x, double center, double w_flat, double w_out) {
    const double u = torus_dist(x, center);
    if (u <= w_flat) return 1.0;
    if (u >= w_out) return 0.0;
    const double c = std::cos(0.5 * M_PI * (u - w_flat) / (w_out - w_flat));
    return c * c * c * c;
}
}  // namespace

Obstacle Obstacle::none() {
    Obstacle o;
    o.eval_ = [](double, double, double) { return -1e9; };
    o.none_ = true;
    o.family_ = "none";
    return o;
}

Obstacle Obstacle::constant(double c) {
    Obstacle o;
    o.eval_ = [c](double, double, double) { return c; };
    o.family_ = "constant";
    o.params_ = {c};
    return o;
}

Obstacle Obstacle::bump(double base, double amp, double center, double width) {
    Obstacle o;
    o.eval_ = [=](double, double x, double) { return base + amp * quartic_bump(x, center, width); };
    o.family_ = "bump";
    o.params_ = {base, amp, center, width};
    return o;
}

Obstacle Obstacle::ramp_bump(double base, double amp, double t0, double alpha, double center,
                             double width) {
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("obstacle ramp_bump: alpha must be in (0,1]");
    Obstacle o;
    o.eval_ = [=](double t, double x, double) {
        const double ramp = t > t0 ? std::pow(t - t0, alpha) : 0.0;
        return base + amp * ramp * quartic_bump(x, center, width);
    };
    o.smoothness_ = ObstacleSmoothness::HolderX;
    o.family_ = "ramp_bump";
    o.params_ = {base, amp, t0, alpha, center, width};
    return o;
}

Obstacle Obstacle::ramp_plateau(double base, double amp, double t0, double alpha, double center,
                                double w_flat, double w_out) {
    if (alpha <= 0.0 || alpha > 1.0)
        throw ConfigError("obstacle ramp_plateau: alpha must be in (0,1]");
    if (!(w_out > w_flat && w_flat > 0.0))
        throw ConfigError("obstacle ramp_plateau: need 0 < w_flat < w_out");
    Obstacle o;
    o.eval_ = [=](double t, double x, double) {
        const double ramp = t > t0 ? std::pow(t - t0, alpha) : 0.0;
        return base + amp * ramp * plateau_bump(x, center, w_flat, w_out);
    };
    o.smoothness_ = ObstacleSmoothness::HolderX;
    o.family_ = "ramp_plateau";
    o.params_ = {base, amp, t0, alpha, center, w_flat, w_out};
    return o;
}

Obstacle Obstacle::moving_sine(double base, double amp, double speed) {
    Obstacle o;
    o.eval_ = [=](double t, double x, double) {
        return base + amp * std::sin(2.0 * M_PI * (x - speed * t));
    };
    o.family_ = "moving_sine";
    o.params_ = {base, amp, speed};
    return o;
}

Obstacle Obstacle::from_config(const std::string& family, const std::vector<double>& p) {
    auto need = [&](size_t k) {
        if (p.size() < k)
            throw ConfigError("obstacle " + family + ": expected " + std::to_string(k) +
                              " parameters, got " + std::to_string(p.size()));
    };
    if (family == "none") return none();
    if (family == "constant") {
        need(1);
        return constant(p[0]);
    }
    if (family == "bump") {
        need(4);
        return bump(p[0], p[1], p[2], p[3]);
    }
    if (family == "ramp_bump") {
        need(6);
        return ramp_bump(p[0], p[1], p[2], p[3], p[4], p[5]);
    }
    if (family == "ramp_plateau") {
        need(7);
        return ramp_plateau(p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
    }
    if (family == "moving_sine") {
        need(3);
        return moving_sine(p[0], p[1], p[2]);
    }
    throw ConfigError("unknown obstacle family: " + family);
}

Field Obstacle::sample(const TorusGrid& g, double t) const {
    Field f(g);
    for (int p = 0; p < g.total_points(); ++p) {
        const auto xy = g.coords(p);
        f[p] = eval_(t, xy[0], xy[1]);
    }
    return f;
}

double Obstacle::sup_on(const TorusGrid& g, double T, int time_samples) const {
    double sup = -1e300;
    for (int j = 0; j < time_samples; ++j) {
        const double t = T * j / (time_samples - 1);
        for (int p = 0; p < g.total_points(); ++p) {
            const auto xy = g.coords(p);
            sup = std::max(sup, eval_(t, xy[0], xy[1]));
        }
    }
    return sup;
}

// ---------------------------------------------------------------------------
// Reaction

Reaction Reaction::none() {
    Reaction f;
    f.eval_ = [](double, double, double, double) { return 0.0; };
    f.none_ = true;
    f.family_ = "none";
    return f;
}

Reaction Reaction::constant(double c) {
    Reaction f;
    f.eval_ = [c](double, double, double, double) { return c; };
    f.lipschitz_ = 0.0;
    f.none_ = (c == 0.0);
    f.family_ = "constant";
    f.params_ = {c};
    return f;
}

Reaction Reaction::sine(double lambda) {
    Reaction f;
    f.eval_ = [lambda](double, double, double, double r) { return lambda * std::sin(r); };
    f.lipschitz_ = std::abs(lambda);
    f.family_ = "sine";
    f.params_ = {lambda};
    return f;
}

Reaction Reaction::damping(double lambda) {
    Reaction f;
    f.eval_ = [lambda](double, double, double, double r) { return -lambda * r; };
    f.lipschitz_ = std::abs(lambda);
    f.family_ = "damping";
    f.params_ = {lambda};
    return f;
}

Reaction Reaction::sine_plus_constant(double lambda, double c) {
    Reaction f;
    f.eval_ = [lambda, c](double, double, double, double r) { return lambda * std::sin(r) + c; };
    f.lipschitz_ = std::abs(lambda);
    f.family_ = "sine_plus_constant";
    f.params_ = {lambda, c};
    return f;
}

Reaction Reaction::sine_with_source(double lambda, double s0) {
    Reaction f;
    f.eval_ = [lambda, s0](double, double x, double, double r) {
        return lambda * std::sin(r) + s0 * std::cos(2.0 * M_PI * x);
    };
    f.lipschitz_ = std::abs(lambda);
    f.family_ = "sine_with_source";
    f.params_ = {lambda, s0};
    return f;
}

Reaction Reaction::from_config(const std::string& family, const std::vector<double>& p) {
    auto need = [&](size_t k) {
        if (p.size() < k)
            throw ConfigError("reaction " + family + ": expected " + std::to_string(k) +
                              " parameters");
    };
    if (family == "none") return none();
    if (family == "constant") {
        need(1);
        return constant(p[0]);
    }
    if (family == "sine") {
        need(1);
        return sine(p[0]);
    }
    if (family == "damping") {
        need(1);
        return damping(p[0]);
    }
    if (family == "sine_with_source") {
        need(2);
        return sine_with_source(p[0], p[1]);
    }
    if (family == "sine_plus_constant") {
        need(2);
        return sine_plus_constant(p[0], p[1]);
    }
    throw ConfigError("unknown reaction family: " + family);
}

// ---------------------------------------------------------------------------
// NoiseMode / NoiseModel

double NoiseMode::s(double r) const {
    switch (profile) {
        case Profile::One: return 1.0;
        case Profile::Linear: return r;
        case Profile::Sine: return std::sin(r);
        case Profile::Tanh: return std::tanh(r);
    }
    return 0.0;
}

double NoiseMode::s_r(double r) const {
    switch (profile) {
        case Profile::One: return 0.0;
        case Profile::Linear: return 1.0;
        case Profile::Sine: return std::cos(r);
        case Profile::Tanh: {
            const double c = std::cosh(r);
            return 1.0 / (c * c);
        }
    }
    return 0.0;
}

double NoiseMode::s_rr(double r) const {
    switch (profile) {
        case Profile::One:
        case Profile::Linear: return 0.0;
        case Profile::Sine: return -std::sin(r);
        case Profile::Tanh: {
            const double t = std::tanh(r);
            const double c = std::cosh(r);
            return -2.0 * t / (c * c);
        }
    }
    return 0.0;
}

double NoiseMode::s_sup(double r_window) const {
    switch (profile) {
        case Profile::One: return 1.0;
        case Profile::Linear: return r_window;
        case Profile::Sine:
        case Profile::Tanh: return std::min(1.0, r_window);
    }
    return 0.0;
}

double NoiseMode::s_r_sup(double) const { return profile == Profile::One ? 0.0 : 1.0; }

double NoiseMode::w(int i, double x, double y) const {
    const double arg = 2.0 * M_PI * (wave[0] * x + wave[1] * y) + phase;
    return dir[static_cast<size_t>(i)] * std::cos(arg);
}

double NoiseMode::w_x(int i, int j, double x, double y) const {
    const double arg = 2.0 * M_PI * (wave[0] * x + wave[1] * y) + phase;
    return -dir[static_cast<size_t>(i)] * 2.0 * M_PI * wave[static_cast<size_t>(j)] *
           std::sin(arg);
}

double NoiseMode::w_xx(int i, int j, int l, double x, double y) const {
    const double arg = 2.0 * M_PI * (wave[0] * x + wave[1] * y) + phase;
    return -dir[static_cast<size_t>(i)] * 4.0 * M_PI * M_PI * wave[static_cast<size_t>(j)] *
           wave[static_cast<size_t>(l)] * std::cos(arg);
}

NoiseModel NoiseModel::from_config(const std::string& family, const std::vector<double>& p,
                                   int modes, int dim) {
    if (family == "none" || modes == 0) return none();
    const double amp = p.empty() ? 0.05 : p[0];
    const double decay = p.size() > 1 ? p[1] : 0.5;
    NoiseMode::Profile prof;
    if (family == "additive") prof = NoiseMode::Profile::One;
    else if (family == "linear") prof = NoiseMode::Profile::Linear;
    else if (family == "sine") prof = NoiseMode::Profile::Sine;
    else if (family == "tanh") prof = NoiseMode::Profile::Tanh;
    else throw ConfigError("unknown noise family: " + family);

    std::vector<NoiseMode> mvec;
    double a = amp;
    for (int k = 0; k < modes; ++k) {
        NoiseMode mode;
        mode.amp = a;
        mode.profile = prof;
        if (dim == 1) {
            mode.dir = {1.0, 0.0};
            mode.wave = {k % 2 == 0 ? (k / 2 + 1) : -(k / 2 + 1), 0};
        } else {
            mode.dir = (k % 2 == 0) ? std::array<double, 2>{1.0, 0.0}
                                    : std::array<double, 2>{0.0, 1.0};
            mode.wave = (k % 2 == 0) ? std::array<int, 2>{k / 2 + 1, 0}
                                     : std::array<int, 2>{0, k / 2 + 1};
        }
        mode.phase = 0.37 * (k + 1);
        mvec.push_back(mode);
        a *= decay;
    }
    return NoiseModel(std::move(mvec));
}

double NoiseModel::sigma(int i, int k, double x, double y, double r) const {
    const NoiseMode& m = modes_[static_cast<size_t>(k)];
    return m.amp * m.s(r) * m.w(i, x, y);
}

double NoiseModel::sigma_r(int i, int k, double x, double y, double r) const {
    const NoiseMode& m = modes_[static_cast<size_t>(k)];
    return m.amp * m.s_r(r) * m.w(i, x, y);
}

double NoiseModel::sigma_x(int i, int k, int j, double x, double y, double r) const {
    const NoiseMode& m = modes_[static_cast<size_t>(k)];
    return m.amp * m.s(r) * m.w_x(i, j, x, y);
}

double NoiseModel::sigma_rx(int i, int k, int j, double x, double y, double r) const {
    const NoiseMode& m = modes_[static_cast<size_t>(k)];
    return m.amp * m.s_r(r) * m.w_x(i, j, x, y);
}

void NoiseModel::ito_coefficients(int dim, double x, double y, double r, double a[2][2],
                                  double b[2]) const {
    for (int i = 0; i < 2; ++i) {
        b[i] = 0.0;
        for (int j = 0; j < 2; ++j) a[i][j] = 0.0;
    }
    for (int k = 0; k < mode_count(); ++k) {
        double sr[2] = {0.0, 0.0};
        for (int i = 0; i < dim; ++i) sr[i] = sigma_r(i, k, x, y, r);
        double div_sx = 0.0;  // sum_j sigma_{x_j}^{jk}
        for (int j = 0; j < dim; ++j) div_sx += sigma_x(j, k, j, x, y, r);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) a[i][j] += 0.5 * sr[i] * sr[j];
            b[i] += 0.5 * sr[i] * div_sx;
        }
    }
}

double NoiseModel::max_a_bound(const TorusGrid& g, double r_window) const {
    double worst = 0.0;
    for (int p = 0; p < g.total_points(); ++p) {
        const auto xy = g.coords(p);
        for (double r : {-r_window, -0.5 * r_window, 0.0, 0.5 * r_window, r_window}) {
            double a[2][2], b[2];
            ito_coefficients(g.dim, xy[0], xy[1], r, a, b);
            for (int i = 0; i < g.dim; ++i) worst = std::max(worst, std::abs(a[i][i]));
        }
    }
    // analytic cap: a^{ii} <= 1/2 sum_k (amp s'_sup |dir|)^2
    double cap = 0.0;
    for (const auto& m : modes_) {
        const double d = std::max(std::abs(m.dir[0]), std::abs(m.dir[1]));
        cap += 0.5 * (m.amp * m.s_r_sup(r_window) * d) * (m.amp * m.s_r_sup(r_window) * d);
    }
    return std::max(worst, cap);
}

double NoiseModel::c3_budget_sample(const TorusGrid&, double r_window) const {
    // per-mode closed-form bound: derivatives in x multiply by 2 pi |wave|,
    // derivatives in r stay within the profile's sup over the window
    CompensatedSum total;
    for (const auto& m : modes_) {
        const double qnorm = 2.0 * M_PI * std::hypot(m.wave[0], m.wave[1]);
        const double xfactor = std::pow(std::max(1.0, qnorm), 3.0);
        const double sfac = std::max({m.s_sup(r_window), m.s_r_sup(r_window), 1.0});
        const double d = std::max(std::abs(m.dir[0]), std::abs(m.dir[1]));
        const double norm = std::abs(m.amp) * d * sfac * xfactor;
        total.add(norm * norm);
    }
    return total.value();
}

// ---------------------------------------------------------------------------
// bracket

double bracket(const std::function<double(double)>& g, double r, double tol) {
    if (r == 0.0) return 0.0;
    return integrate_adaptive(g, 0.0, r, tol);
}

// ---------------------------------------------------------------------------
// Assumption validation

bool AssumptionReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

std::string AssumptionReport::to_string() const {
    std::ostringstream os;
    for (const auto& c : checks) {
        os << (c.pass ? "[pass] " : "[FAIL] ") << c.name << "  margin=" << c.worst_margin;
        if (!c.witness.empty()) os << "  worst at " << c.witness;
        os << "\n";
    }
    return os.str();
}

PhiProbe PhiProbe::from(const Nonlinearity& nl) {
    PhiProbe p;
    p.phi = [nl](double r) { return nl.phi(r); };
    p.sqrt_phi_prime = [nl](double r) { return nl.sqrt_phi_prime(r); };
    p.m = nl.m;
    p.K = nl.structure_constant;
    return p;
}

namespace {

struct CheckAccum {
    CheckResult result;
    bool seen = false;
    explicit CheckAccum(std::string name) {
        result.name = std::move(name);
        result.worst_margin = std::numeric_limits<double>::infinity();
    }
    void observe(double margin, const std::string& where) {
        if (!seen || margin < result.worst_margin) {
            result.worst_margin = margin;
            result.witness = where;
            seen = true;
        }
        if (margin < 0.0) result.pass = false;
    }
    CheckResult done() {
        if (!seen) result.worst_margin = 0.0;
        return result;
    }
};

std::string fmt1(const char* name, double v) {
    std::ostringstream os;
    os << name << "=" << v;
    return os.str();
}

}  // namespace

AssumptionReport validate_phi(const PhiProbe& probe, int sample_budget, std::uint64_t seed) {
    AssumptionReport report;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> wide(-3.0, 3.0);
    std::uniform_real_distribution<double> small(-0.95, 0.95);

    CheckAccum odd("phi odd");
    CheckAccum origin("sqrt_phi_prime bounded at origin");
    CheckAccum deriv("sqrt_phi_prime derivative bound");
    CheckAccum lower("sqrt_phi_prime lower bound for |r| >= 1");
    CheckAccum tworeg("two-regime bracket coercivity");

    origin.observe(probe.K - std::abs(probe.sqrt_phi_prime(0.0)), "r=0");

    auto bracket_sqrt = [&](double r) { return bracket(probe.sqrt_phi_prime, r, 1e-10); };

    for (int it = 0; it < sample_budget; ++it) {
        const bool small_regime = (it % 2 == 0);
        const double r = small_regime ? small(rng) : wide(rng);
        const double s = small_regime ? small(rng) : wide(rng);

        odd.observe(-std::abs(probe.phi(-r) + probe.phi(r)), fmt1("r", r));

        if (std::abs(r) > 1e-4) {
            const double h = 1e-6 * std::max(1.0, std::abs(r));
            const double fd =
                (probe.sqrt_phi_prime(r + h) - probe.sqrt_phi_prime(r - h)) / (2.0 * h);
            const double bound = probe.K * std::pow(std::abs(r), 0.5 * (probe.m - 3.0));
            deriv.observe(bound * (1.0 + 1e-4) - std::abs(fd), fmt1("r", r));
        }

        const double rbig = std::copysign(1.0 + std::abs(r), r);
        lower.observe(probe.sqrt_phi_prime(rbig) - 1.0 / probe.K, fmt1("r", rbig));

        if (std::abs(r - s) > 1e-9) {
            const double lhs = probe.m * probe.K * std::abs(bracket_sqrt(r) - bracket_sqrt(s));
            const double rhs = (std::max(std::abs(r), std::abs(s)) >= 1.0)
                                   ? std::abs(r - s)
                                   : std::pow(std::abs(r - s), 0.5 * (probe.m + 1.0));
            tworeg.observe(lhs - rhs + 1e-12, fmt1("r", r) + ", " + fmt1("s", s));
        }
    }

    report.checks.push_back(odd.done());
    report.checks.push_back(origin.done());
    report.checks.push_back(deriv.done());
    report.checks.push_back(lower.done());
    report.checks.push_back(tworeg.done());
    return report;
}

AssumptionReport validate_assumptions(const ModelSpec& model, int sample_budget,
                                      std::uint64_t seed) {
    AssumptionReport report = validate_phi(PhiProbe::from(model.flux.base()), sample_budget, seed);

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> ur(-2.5, 2.5);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    const double K = model.K();
    const TorusGrid grid(1, 64);

    // noise: supplied partials vs central differences
    CheckAccum nd("noise partials match finite differences");
    CheckAccum sym("ito a symmetric");
    const auto& noise = model.noise;
    for (int it = 0; it < std::max(1, sample_budget / 4) && noise.mode_count() > 0; ++it) {
        const double x = ux(rng), y = ux(rng), r = ur(rng);
        for (int k = 0; k < noise.mode_count(); ++k) {
            const double hr = 1e-6;
            const double fd_r = (noise.sigma(0, k, x, y, r + hr) - noise.sigma(0, k, x, y, r - hr)) /
                                (2.0 * hr);
            const double an_r = noise.sigma_r(0, k, x, y, r);
            const double scale = std::max(1e-8, std::abs(an_r));
            nd.observe(1e-6 - std::abs(fd_r - an_r) / scale, fmt1("r", r));

            const double hx = 1e-6;
            const double fd_x = (noise.sigma(0, k, x + hx, y, r) - noise.sigma(0, k, x - hx, y, r)) /
                                (2.0 * hx);
            const double an_x = noise.sigma_x(0, k, 0, x, y, r);
            const double scale_x = std::max(1e-6, std::abs(an_x));
            nd.observe(1e-6 - std::abs(fd_x - an_x) / scale_x, fmt1("x", x));
        }
        double a[2][2], b[2];
        noise.ito_coefficients(2, x, y, r, a, b);
        sym.observe(-std::abs(a[0][1] - a[1][0]), fmt1("r", r));
    }
    if (noise.mode_count() > 0) {
        report.checks.push_back(nd.done());
        report.checks.push_back(sym.done());

        CheckAccum budget("noise C3 budget within K");
        budget.observe(K - noise.c3_budget_sample(grid, 2.5), "sampled window |r|<=2.5");
        report.checks.push_back(budget.done());
    }

    // reaction: Lipschitz quotient in r, Hoelder quotient in x
    if (!model.reaction.is_none()) {
        CheckAccum lip("reaction Lipschitz in r");
        CheckAccum hold("reaction Hoelder in x");
        const double kappa = model.flux.base().holder_exponent;
        for (int it = 0; it < sample_budget; ++it) {
            const double t = ux(rng), x = ux(rng), y = ux(rng);
            const double r1 = ur(rng), r2 = ur(rng);
            if (std::abs(r1 - r2) > 1e-9) {
                const double q = std::abs(model.reaction(t, x, 0.0, r1) -
                                          model.reaction(t, x, 0.0, r2)) /
                                 std::abs(r1 - r2);
                lip.observe(K - q + 1e-12, fmt1("r1", r1));
            }
            const double dx = torus_dist(x, y);
            if (dx > 1e-9) {
                const double q = std::abs(model.reaction(t, x, 0.0, r1) -
                                          model.reaction(t, y, 0.0, r1)) /
                                 std::pow(dx, kappa);
                hold.observe(K - q + 1e-12, fmt1("x", x));
            }
        }
        report.checks.push_back(lip.done());
        report.checks.push_back(hold.done());
    }

    // obstacle: finite and continuous on samples
    if (!model.obstacle.is_none()) {
        CheckAccum fin("obstacle finite and continuous");
        for (int it = 0; it < sample_budget; ++it) {
            const double t = ux(rng), x = ux(rng);
            const double v = model.obstacle(t, x);
            if (!std::isfinite(v)) {
                fin.observe(-1.0, fmt1("t", t));
                continue;
            }
            const double v2 = model.obstacle(t, x + 1e-7);
            fin.observe(1e-2 - std::abs(v2 - v), fmt1("x", x));
        }
        report.checks.push_back(fin.done());
    }

    // the smoothed flux must satisfy the same structural bounds with 3K
    if (const auto* sm = model.flux.smoothed()) {
        PhiProbe p;
        p.phi = [sm](double r) { return sm->phi(r); };
        p.sqrt_phi_prime = [sm](double r) { return sm->sqrt_phi_prime(r); };
        p.m = model.m();
        p.K = 3.0 * K;
        AssumptionReport smr = validate_phi(p, sample_budget / 2, seed + 7);
        for (auto& c : smr.checks) {
            c.name = "smoothed " + c.name;
            report.checks.push_back(std::move(c));
        }
    }

    return report;
}

}  // namespace pmob
