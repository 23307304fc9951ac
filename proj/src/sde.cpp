#include "pmob/sde.hpp"

#include <cmath>
#include <stdexcept>

namespace pmob {

namespace {

// splitmix64 finalizer; applied in cascade over the counter words
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                  std::uint64_t c, std::uint64_t domain) {
    std::uint64_t h = mix64(seed ^ (domain * 0xd6e8feb86659fd93ull));
    h = mix64(h ^ (a * 0xff51afd7ed558ccdull));
    h = mix64(h ^ (b * 0xc4ceb9fe1a85ec53ull));
    h = mix64(h ^ (c * 0x9e3779b97f4a7c15ull));
    return mix64(h);
}

inline double to_open_unit(std::uint64_t h) {
    // 53 mantissa bits, shifted into (0, 1)
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

// AS241 (Wichura 1988), relative error below 1e-15 across (0, 1).
double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf: p must be in (0,1)");
    const double q = p - 0.5;
    double r;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

double counter_uniform(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t step,
                       std::uint64_t mode) {
    return to_open_unit(counter_hash(seed, trajectory, step, mode, /*domain=*/1));
}

double wiener_increment(const NoisePathSpec& spec, int step, int mode) {
    const double u = counter_uniform(spec.seed, spec.trajectory_id,
                                     static_cast<std::uint64_t>(step),
                                     static_cast<std::uint64_t>(mode));
    return std::sqrt(spec.dt) * inverse_normal_cdf(u);
}

IncrementBlock wiener_increments(const NoisePathSpec& spec) {
    if (spec.dt <= 0.0 && spec.step_count > 0)
        throw std::invalid_argument("wiener_increments: dt must be positive");
    if (spec.step_count < 0 || spec.mode_count < 0)
        throw std::invalid_argument("wiener_increments: counts must be nonnegative");
    IncrementBlock block(spec.step_count, spec.mode_count);
    for (int j = 0; j < spec.step_count; ++j)
        for (int k = 0; k < spec.mode_count; ++k) block(j, k) = wiener_increment(spec, j, k);
    return block;
}

double variant_uniform(const NoisePathSpec& spec, std::uint64_t index) {
    return to_open_unit(
        counter_hash(spec.seed, spec.variant_tag, spec.trajectory_id, index, /*domain=*/2));
}

}  // namespace pmob
