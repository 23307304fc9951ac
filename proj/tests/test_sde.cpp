#include <cmath>

#include "doctest.h"
#include "pmob/sde.hpp"

using namespace pmob;

TEST_CASE("empty block for the deterministic mode") {
    NoisePathSpec spec{.seed = 9, .mode_count = 0, .step_count = 100, .dt = 0.01};
    IncrementBlock b = wiener_increments(spec);
    CHECK(b.modes() == 0);
    CHECK(b.steps() == 100);
}

TEST_CASE("same spec gives bitwise-identical blocks") {
    NoisePathSpec spec{.seed = 123456, .trajectory_id = 7, .mode_count = 3, .step_count = 50,
                       .dt = 0.02};
    IncrementBlock a = wiener_increments(spec);
    IncrementBlock b = wiener_increments(spec);
    for (int j = 0; j < 50; ++j)
        for (int k = 0; k < 3; ++k) CHECK(a(j, k) == b(j, k));
}

TEST_CASE("coupling keeps the increment stream") {
    NoisePathSpec spec{.seed = 99, .trajectory_id = 2, .mode_count = 2, .step_count = 64,
                       .dt = 0.005, .variant_tag = 0};
    NoisePathSpec coupled = spec.couple(42);
    IncrementBlock a = wiener_increments(spec);
    IncrementBlock b = wiener_increments(coupled);
    for (int j = 0; j < 64; ++j)
        for (int k = 0; k < 2; ++k) CHECK(a(j, k) == b(j, k));
    // but auxiliary randomness differs
    CHECK(variant_uniform(spec, 0) != variant_uniform(coupled, 0));
}

TEST_CASE("stream does not depend on step_count") {
    NoisePathSpec shorter{.seed = 4, .mode_count = 2, .step_count = 32, .dt = 0.01};
    NoisePathSpec longer = shorter;
    longer.step_count = 64;
    IncrementBlock a = wiener_increments(shorter);
    IncrementBlock b = wiener_increments(longer);
    for (int j = 0; j < 32; ++j)
        for (int k = 0; k < 2; ++k) CHECK(a(j, k) == b(j, k));
}

TEST_CASE("gaussian sampling statistics") {
    const int n = 100000;
    const double dt = 0.01;
    NoisePathSpec spec{.seed = 2024, .mode_count = 2, .step_count = n, .dt = dt};
    double sum0 = 0.0, sumsq0 = 0.0, cross = 0.0, sum1 = 0.0;
    for (int j = 0; j < n; ++j) {
        const double w0 = wiener_increment(spec, j, 0);
        const double w1 = wiener_increment(spec, j, 1);
        sum0 += w0;
        sum1 += w1;
        sumsq0 += w0 * w0;
        cross += w0 * w1;
    }
    const double mean0 = sum0 / n;
    const double var0 = sumsq0 / n - mean0 * mean0;
    CHECK(std::abs(mean0) <= 3.0 * std::sqrt(dt / n));
    CHECK(std::abs(var0 - dt) <= 0.05 * dt);

    const double mean1 = sum1 / n;
    const double corr = (cross / n - mean0 * mean1) / dt;
    CHECK(std::abs(corr) <= 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("inverse normal cdf hits known quantiles") {
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(inverse_normal_cdf(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-12));
    CHECK(inverse_normal_cdf(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-9));
    CHECK_THROWS(inverse_normal_cdf(0.0));
}
