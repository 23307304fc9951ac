#include "pmob/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace pmob {

// Abscissae/weights for 16-point Gauss-Legendre on [-1, 1].
const double GaussLegendre16::nodes[GaussLegendre16::kPoints] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.7554044083550030,
    -0.6178762444026438, -0.4580167776572274, -0.2816035507792589, -0.0950125098376374,
    0.0950125098376374,  0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,  0.9894009349916499};

const double GaussLegendre16::weights[GaussLegendre16::kPoints] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928, 0.1246289712555339,
    0.1495959888165767, 0.1691565193950025, 0.1826034150449236, 0.1894506104550685,
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

double gl16_panel(const std::function<double(double)>& g, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    CompensatedSum s;
    for (int i = 0; i < GaussLegendre16::kPoints; ++i) {
        s.add(GaussLegendre16::weights[i] * g(mid + half * GaussLegendre16::nodes[i]));
    }
    return half * s.value();
}

namespace {

double integrate_rec(const std::function<double(double)>& g, double a, double b,
                     double whole, double tol, int depth, int max_depth, double& err_acc) {
    const double mid = 0.5 * (a + b);
    const double left = gl16_panel(g, a, mid);
    const double right = gl16_panel(g, mid, b);
    const double diff = std::abs(left + right - whole);
    if (diff <= tol || depth >= max_depth) {
        if (depth >= max_depth && diff > tol) err_acc += diff;
        return left + right;
    }
    return integrate_rec(g, a, mid, left, 0.5 * tol, depth + 1, max_depth, err_acc) +
           integrate_rec(g, mid, b, right, 0.5 * tol, depth + 1, max_depth, err_acc);
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& g, double a, double b,
                          double tol, int max_depth) {
    if (a == b) return 0.0;
    double sign = 1.0;
    if (b < a) {
        std::swap(a, b);
        sign = -1.0;
    }
    double err_acc = 0.0;
    const double whole = gl16_panel(g, a, b);
    const double result = integrate_rec(g, a, b, whole, tol, 0, max_depth, err_acc);
    if (err_acc > tol) {
        throw QuadratureError("adaptive quadrature did not reach requested tolerance", err_acc);
    }
    return sign * result;
}

// ---------------------------------------------------------------------------
// Mollifier

namespace {
// Flattened exponential bump: exp(-beta / (x(1-x))) with beta = 1/4 keeps the
// normalized maximum below 2 (the classic beta = 1 bump exceeds it).
constexpr double kBumpBeta = 0.25;
constexpr int kMollifierTable = 8192;
}  // namespace

double Mollifier::raw(double x) const {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return std::exp(-kBumpBeta / (x * (1.0 - x)));
}

Mollifier::Mollifier() {
    // Normalize with a fine Simpson rule, then build cumulative tables with
    // the same rule so that cumulative(1) == 1 to rounding.
    const int n = kMollifierTable;
    step_ = 1.0 / n;
    std::vector<double> vals(n + 1);
    for (int i = 0; i <= n; ++i) vals[i] = raw(i * step_);

    cum_.assign(n + 1, 0.0);
    CompensatedSum acc;
    for (int i = 0; i < n; ++i) {
        const double mid = raw((i + 0.5) * step_);
        acc.add(step_ / 6.0 * (vals[i] + 4.0 * mid + vals[i + 1]));
        cum_[i + 1] = acc.value();
    }
    norm_ = 1.0 / cum_[n];
    for (auto& c : cum_) c *= norm_;
    max_value_ = 0.0;
    for (double v : vals) max_value_ = std::max(max_value_, v * norm_);

    cum2_.assign(n + 1, 0.0);
    CompensatedSum acc2;
    for (int i = 0; i < n; ++i) {
        acc2.add(step_ * 0.5 * (cum_[i] + cum_[i + 1]));
        cum2_[i + 1] = acc2.value();
    }
}

const Mollifier& Mollifier::instance() {
    static const Mollifier m;
    return m;
}

double Mollifier::operator()(double x) const { return norm_ * raw(x); }

namespace {
double table_lookup(const std::vector<double>& tab, double step, double x) {
    if (x <= 0.0) return 0.0;
    const int n = static_cast<int>(tab.size()) - 1;
    if (x >= 1.0) return tab[n];
    const double s = x / step;
    const int i = std::min(static_cast<int>(s), n - 1);
    const double frac = s - i;
    return tab[i] + frac * (tab[i + 1] - tab[i]);
}
}  // namespace

double Mollifier::cumulative(double x) const { return table_lookup(cum_, step_, x); }

double Mollifier::cumulative2(double x) const {
    if (x >= 1.0) return cum2_.back() + (x - 1.0) * cum_.back();
    return table_lookup(cum2_, step_, x);
}

// ---------------------------------------------------------------------------
// TimeCutoff

TimeCutoff::TimeCutoff(double final_time, double ramp_fraction) : T_(final_time) {
    if (final_time <= 0.0) throw std::invalid_argument("TimeCutoff: final_time must be > 0");
    ramp_fraction = std::clamp(ramp_fraction, 1e-3, 1.0);
    t_ramp_ = T_ * (1.0 - ramp_fraction);
}

double TimeCutoff::operator()(double t) const {
    if (t <= t_ramp_) return 1.0;
    if (t >= T_) return 0.0;
    const double s = (t - t_ramp_) / (T_ - t_ramp_);
    // quintic smoothstep descending from 1 to 0
    return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

double TimeCutoff::derivative(double t) const {
    if (t <= t_ramp_ || t >= T_) return 0.0;
    const double w = T_ - t_ramp_;
    const double s = (t - t_ramp_) / w;
    return -30.0 * s * s * (1.0 - s) * (1.0 - s) / w;
}

}  // namespace pmob
