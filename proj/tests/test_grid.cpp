#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pmob/grid.hpp"
#include "test_util.hpp"

using namespace pmob;
using pmob::test::random_field;
using pmob::test::random_vector_field;
using pmob::test::sampled;

TEST_CASE("grid invariants") {
    TorusGrid g(1, 8);
    CHECK(g.spacing() * g.points_per_dim == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.wrap(-1) == 7);
    CHECK(g.wrap(8) == 0);
    TorusGrid g2(2, 16);
    CHECK(g2.total_points() == 256);
    CHECK_THROWS(TorusGrid(3, 8));
}

TEST_CASE("laplacian of constants and spikes") {
    TorusGrid g(1, 8);
    Field c(g, 3.7);
    Field lc = laplacian(c);
    for (int p = 0; p < 8; ++p) CHECK(lc[p] == 0.0);

    Field spike(g);
    spike[3] = 1.0;
    Field ls = laplacian(spike);
    const double inv_h2 = 64.0;
    CHECK(ls[3] == doctest::Approx(-2.0 * inv_h2));
    CHECK(ls[2] == doctest::Approx(inv_h2));
    CHECK(ls[4] == doctest::Approx(inv_h2));
    CHECK(ls[0] == 0.0);
}

TEST_CASE("laplacian second-order accuracy against the analytic derivative") {
    TorusGrid g(1, 64);
    Field f = sampled(g, [](double x, double) { return std::cos(2.0 * M_PI * x); });
    Field lf = laplacian(f);
    const double w2 = 4.0 * M_PI * M_PI;
    double max_err = 0.0;
    for (int p = 0; p < g.total_points(); ++p) {
        const double x = g.coords(p)[0];
        max_err = std::max(max_err, std::abs(lf[p] + w2 * std::cos(2.0 * M_PI * x)));
    }
    const double h2 = g.spacing() * g.spacing();
    const double c4 = w2 * w2 / 12.0;  // leading Taylor constant of the 3-point stencil
    CHECK(max_err <= 1.0001 * c4 * h2);
    CHECK(max_err >= 0.5 * c4 * h2);  // the bound is sharp, not vacuous
}

TEST_CASE("gradient accuracy and trivials") {
    TorusGrid g(1, 64);
    Field c(g, -2.0);
    VectorField gc = gradient(c);
    for (int p = 0; p < 64; ++p) CHECK(gc.component(0)[p] == 0.0);

    Field f = sampled(g, [](double x, double) { return std::sin(2.0 * M_PI * x); });
    VectorField gf = gradient(f);
    double max_err = 0.0;
    for (int p = 0; p < g.total_points(); ++p) {
        const double x = g.coords(p)[0];
        max_err = std::max(max_err,
                           std::abs(gf.component(0)[p] - 2.0 * M_PI * std::cos(2.0 * M_PI * x)));
    }
    const double c3 = std::pow(2.0 * M_PI, 3) / 6.0;
    CHECK(max_err <= 1.0001 * c3 * g.spacing() * g.spacing());
}

TEST_CASE("divergence of gradient is the wide laplacian") {
    TorusGrid g(1, 16);
    std::mt19937_64 rng(7);
    Field f = random_field(g, rng);
    Field dg = divergence(gradient(f));
    // wide stencil: (f(i+2) - 2 f(i) + f(i-2)) / (2h)^2
    const double inv = 1.0 / (4.0 * g.spacing() * g.spacing());
    for (int i = 0; i < 16; ++i) {
        const double wide = (f[g.index(i + 2)] - 2.0 * f[i] + f[g.index(i - 2)]) * inv;
        CHECK(dg[i] == doctest::Approx(wide).epsilon(1e-13));
    }
}

TEST_CASE("inner product examples") {
    for (int dim : {1, 2}) {
        TorusGrid g(dim, 16);
        Field one(g, 1.0);
        CHECK(inner(one, one) == doctest::Approx(1.0).epsilon(1e-14));
    }
    TorusGrid g(1, 64);
    Field s = sampled(g, [](double x, double) { return std::sin(2.0 * M_PI * x); });
    Field c = sampled(g, [](double x, double) { return std::cos(2.0 * M_PI * x); });
    CHECK(std::abs(inner(s, c)) <= 1e-14);
    CHECK(inner(s, s) > 0.0);
    Field z(g);
    CHECK(inner(z, z) == 0.0);

    TorusGrid other(1, 32);
    Field w(other, 1.0);
    CHECK_THROWS_AS((void)inner(s, w), GridMismatchError);
}

TEST_CASE("summation by parts and mean preservation on random fields") {
    std::mt19937_64 rng(42);
    for (int dim : {1, 2}) {
        for (int n : {16, 64}) {
            TorusGrid g(dim, n);
            for (int rep = 0; rep < 10; ++rep) {
                Field f = random_field(g, rng);
                VectorField F = random_vector_field(g, rng);
                double fnorm = l2_norm(f);
                double Fnorm = 0.0;
                for (int i = 0; i < dim; ++i)
                    Fnorm += l2_norm(F.component(i)) * l2_norm(F.component(i));
                Fnorm = std::sqrt(Fnorm);

                double pairing = 0.0;
                VectorField gf = gradient(f);
                for (int i = 0; i < dim; ++i) pairing += inner(gf.component(i), F.component(i));
                pairing += inner(f, divergence(F));
                CHECK(std::abs(pairing) <= 1e-12 * std::max(fnorm * Fnorm, 1e-30));

                CHECK(std::abs(mean(divergence(F))) <= 1e-13 * std::max(Fnorm, 1e-30));
                CHECK(std::abs(mean(laplacian(f))) <=
                      1e-13 * std::max(fnorm, 1e-30) / (g.spacing() * g.spacing()));
            }
        }
    }
}

TEST_CASE("translation equivariance is exact") {
    std::mt19937_64 rng(3);
    for (int dim : {1, 2}) {
        TorusGrid g(dim, 16);
        Field f = random_field(g, rng);
        const int kx = 5, ky = dim == 2 ? 11 : 0;
        Field a = shifted(laplacian(f), kx, ky);
        Field b = laplacian(shifted(f, kx, ky));
        for (int p = 0; p < g.total_points(); ++p) CHECK(a[p] == b[p]);

        Field da = shifted(divergence(gradient(f)), kx, ky);
        Field db = divergence(gradient(shifted(f, kx, ky)));
        for (int p = 0; p < g.total_points(); ++p) CHECK(da[p] == db[p]);
    }
}

TEST_CASE("field serialization round trips") {
    std::mt19937_64 rng(11);
    for (int dim : {1, 2}) {
        TorusGrid g(dim, 8);
        Field f = random_field(g, rng);

        std::stringstream csv;
        write_field_csv(f, csv);
        Field fc = read_field_csv(csv, g);
        for (int p = 0; p < g.total_points(); ++p) CHECK(fc[p] == f[p]);

        std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
        write_field_binary(f, bin);
        Field fb = read_field_binary(bin);
        CHECK(fb.grid() == g);
        for (int p = 0; p < g.total_points(); ++p) CHECK(fb[p] == f[p]);
    }
}
