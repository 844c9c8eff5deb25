#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tmflow/error.hpp"
#include "tmflow/ricci.hpp"

using namespace tmflow;

namespace {

constexpr double kPi = std::numbers::pi;

// Arithmetic-geometric mean form of the complete elliptic integral, real m < 1.
double elliptic_k_oracle(double m) {
    double a = 1.0, b = std::sqrt(1.0 - m);
    for (int k = 0; k < 40; ++k) {
        const double an = 0.5 * (a + b);
        b = std::sqrt(a * b);
        a = an;
    }
    return kPi / (2.0 * a);
}

}  // namespace

TEST_CASE("complete elliptic integral") {
    for (double m : {0.0, 0.1, 0.5, 0.9, -2.0})
        CHECK(elliptic_k(m).real() == doctest::Approx(elliptic_k_oracle(m)).epsilon(1e-14));
    CHECK(elliptic_k(0.5).real() == doctest::Approx(1.8540746773013719).epsilon(1e-14));
    CHECK(std::abs(elliptic_k(0.3).imag()) <= 1e-15);
}

TEST_CASE("puncture rotation is orthogonal") {
    const auto R = puncture_rotation();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += R[3 * i + k] * R[3 * j + k];
            CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));
        }
}

TEST_CASE("round sphere: curvature one and exact linear area decay") {
    auto m = round_metric(32, 64);
    CHECK(sphere_area(m) == doctest::Approx(4.0 * kPi).epsilon(1e-12));
    for (double K : gauss_curvature(m)) CHECK(K == doctest::Approx(1.0).epsilon(1e-12));

    double t = 0.0;
    for (int k = 0; k < 200; ++k) {
        const double dt = 0.5 * ricci_cfl_limit(m);
        ricci_step(m, dt);
        t += dt;
    }
    CHECK(sphere_area(m) == doctest::Approx(4.0 * kPi - 8.0 * kPi * t).epsilon(1e-12));
    for (double K : gauss_curvature(m)) CHECK(K == doctest::Approx(1.0 / (1.0 - 2.0 * t)).epsilon(1e-10));

    const auto c = round_metric(16, 32, 0.3);
    CHECK(sphere_area(c) == doctest::Approx(4.0 * kPi * std::exp(0.6)).epsilon(1e-12));
}

TEST_CASE("round sphere run reaches extinction at A/(8 pi)") {
    RicciConfig cfg;
    const auto run = run_ricci(round_metric(16, 32), cfg);
    CHECK(run.status == "near-extinction");
    CHECK(run.T_pred == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(run.gauss_bonnet_max_error <= 1e-10);
    const auto rep = extinction_report(run, 4);
    CHECK(rep.slope == doctest::Approx(-8.0 * kPi).epsilon(1e-10));
    CHECK(rep.deviation_last <= 1e-8);
    CHECK(rep.area_strictly_decreasing);
}

TEST_CASE("thrice-punctured sphere: capped initial data and flow") {
    const auto c64 = build_cusped_initial(3, 64.0, 32, 64);
    CHECK(c64.exact_area == doctest::Approx(2.0 * kPi));
    CHECK(c64.deficit_measured > 0.0);
    CHECK(c64.deficit_measured / c64.exact_area <= 0.05);
    CHECK(c64.deficit_measured == doctest::Approx(c64.deficit_analytic).epsilon(0.05));
    CHECK(c64.curvature_residual <= 1e-3);

    const auto c128 = build_cusped_initial(3, 128.0, 32, 64);
    CHECK(c128.deficit_measured < c64.deficit_measured);
    CHECK(c128.deficit_measured == doctest::Approx(c128.deficit_analytic).epsilon(0.05));

    const auto run = run_ricci(c64.metric);
    const auto rep = extinction_report(run, 3);
    CHECK(run.status == "near-extinction");
    CHECK(rep.T_ref == 0.25);
    CHECK(std::abs(rep.T_pred - 0.25) / 0.25 <= 0.05);
    CHECK(rep.slope_rel_error <= 0.01);
    CHECK(rep.deviation_last <= 0.05);
    CHECK(rep.area_strictly_decreasing);
    CHECK(run.min_K_violation <= 0.0);
    CHECK(run.gauss_bonnet_max_error <= 1e-10);
}

TEST_CASE("four punctures target area 4 pi") {
    const auto c = build_cusped_initial(4, 64.0, 32, 64);
    CHECK(c.exact_area == doctest::Approx(4.0 * kPi));
    CHECK(c.deficit_measured / c.exact_area <= 0.05);
    CHECK(c.deficit_measured == doctest::Approx(c.deficit_analytic).epsilon(0.06));
}

TEST_CASE("preconditions") {
    CHECK_THROWS_AS(build_cusped_initial(2, 64.0), DomainError);
    CHECK_THROWS_AS(build_cusped_initial(3, 5.0), DomainError);
    CHECK_THROWS_AS(build_cusped_initial(3, std::numeric_limits<double>::infinity()), DomainError);
    CHECK_THROWS_AS(round_metric(4, 4), DomainError);
    auto m = round_metric(16, 32);
    CHECK_THROWS_AS(ricci_step(m, 2.0 * ricci_cfl_limit(m)), DomainError);
    RicciRun tiny;
    tiny.samples.resize(3);
    CHECK_THROWS_AS(extinction_report(tiny, 3), DomainError);
}
