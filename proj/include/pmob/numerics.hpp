#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmob {

/// Compensated (Neumaier) summation. Used for every grid reduction so that
/// telescoping identities hold to ~1e-15 relative even on large grids.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

/// 16-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre16 {
    static constexpr int kPoints = 16;
    static const double nodes[kPoints];
    static const double weights[kPoints];
};

/// Integrate g over [a, b] with a single 16-point panel.
double gl16_panel(const std::function<double(double)>& g, double a, double b);

struct QuadratureError : std::runtime_error {
    QuadratureError(const std::string& what, double achieved)
        : std::runtime_error(what), achieved_error(achieved) {}
    double achieved_error;
};

/// Adaptive composite Gauss-Legendre integration of g over [a, b] to absolute
/// tolerance tol. Panels are refined dyadically; throws QuadratureError with
/// the achieved error estimate if the refinement limit is hit.
double integrate_adaptive(const std::function<double(double)>& g, double a, double b,
                          double tol, int max_depth = 30);

/// The canonical one-sided mollifier: a fixed smooth bump with values in
/// [0, 2], positive exactly on (0, 1), unit integral. rho_theta(r) =
/// rho(r/theta)/theta concentrates it on (0, theta).
class Mollifier {
public:
    static const Mollifier& instance();

    double operator()(double x) const;      // rho(x)
    double cumulative(double x) const;      // integral of rho over [0, x]
    double cumulative2(double x) const;     // integral of cumulative over [0, x]
    double max_value() const { return max_value_; }

private:
    Mollifier();
    double raw(double x) const;  // un-normalized bump

    double norm_ = 1.0;
    double max_value_ = 0.0;
    // dense tables of cumulative/cumulative2 on [0, 1]
    std::vector<double> cum_, cum2_;
    double step_ = 0.0;
};

/// Smooth time cutoff on [0, T]: equals 1 on [0, (1-ramp)T], descends through
/// a quintic ramp, and is exactly 0 at T (with vanishing first and second
/// derivatives there). Nonnegative and nonincreasing.
class TimeCutoff {
public:
    TimeCutoff(double final_time, double ramp_fraction = 0.5);
    double operator()(double t) const;
    double derivative(double t) const;
    double final_time() const { return T_; }

private:
    double T_;
    double t_ramp_;  // ramp start
};

}  // namespace pmob
