#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tmflow/error.hpp"
#include "tmflow/hypgeom.hpp"

using namespace tmflow;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double oracle_half_length(double ell, double delta) {
    if (2.0 * delta < ell) return 0.0;
    return kTwoPi / ell * std::acos(std::sinh(ell / 2.0) / std::sinh(delta));
}

// Curvature of rho^2 |dz|^2 from a five-point stencil on log rho.
double oracle_curvature(double ell, double s) {
    const double h = 1e-3;
    auto lr = [&](double x) { return std::log(ell / (kTwoPi * std::cos(ell * x / kTwoPi))); };
    const double d2 = (-lr(s + 2 * h) + 16 * lr(s + h) - 30 * lr(s) + 16 * lr(s - h) - lr(s - 2 * h)) / (12 * h * h);
    const double r = ell / (kTwoPi * std::cos(ell * s / kTwoPi));
    return -d2 / (r * r);
}

}  // namespace

TEST_CASE("collar half-length satisfies the cosine identity on a 20x20 grid") {
    int nonzero = 0;
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            const double ell = 0.05 + 2.95 * i / 19.0;
            const double delta = 0.05 + 2.95 * j / 19.0;
            const double X = collar_half_length(ell, delta);
            CHECK(X == doctest::Approx(oracle_half_length(ell, delta)).epsilon(1e-12));
            if (2.0 * delta < ell) {
                CHECK(X == 0.0);
            } else {
                ++nonzero;
                const double lhs = std::cos(ell * X / kTwoPi) * std::sinh(delta) - std::sinh(ell / 2.0);
                CHECK(std::abs(lhs) <= 1e-12);
                CHECK(collar_identity_residual(ell, delta) <= 1e-12);
            }
        }
    }
    CHECK(nonzero > 100);
}

TEST_CASE("collar vanishes exactly below the threshold 2 delta < ell") {
    CHECK(collar_half_length(1.0, 0.49) == 0.0);
    CHECK(collar_half_length(2.0, 0.999999) == 0.0);
    CHECK(collar_half_length(1.0, 0.5) == 0.0);
    CHECK(collar_half_length(1.0, 0.51) > 0.0);
}

TEST_CASE("conformal factor has curvature -1 and its minimum at the core") {
    for (double ell : {0.1, 0.7, 2.0}) {
        const double X = collar_half_length(ell, 1.5);
        for (double f : {-0.9, -0.3, 0.0, 0.5, 0.95}) CHECK(oracle_curvature(ell, f * X) == doctest::Approx(-1.0).epsilon(1e-6));
        CHECK(collar_conformal_factor(ell, 0.0) == doctest::Approx(ell / kTwoPi));
        CHECK(collar_conformal_factor(ell, 0.3 * X) > collar_conformal_factor(ell, 0.0));
        CHECK(collar_conformal_factor(ell, -0.3 * X) == doctest::Approx(collar_conformal_factor(ell, 0.3 * X)));
    }
    const auto c = make_collar(1.0, 0.6);
    CHECK(c.rho(c.X) == doctest::Approx(1.0 / kTwoPi * std::sinh(0.6) / std::sinh(0.5)).epsilon(1e-12));
}

TEST_CASE("Liouville residual is small and converges at second order") {
    const double ell = 1.0;
    const double X = collar_half_length(ell, 0.6);
    auto residual = [&](std::size_t n) {
        const auto rho = sample_collar_rho(ell, X, n, 16);
        return liouville_curvature_residual(rho, n + 1, 16, 2.0 * X / static_cast<double>(n), kTwoPi / 16.0);
    };
    const double r256 = residual(256);
    const double r512 = residual(512);
    CHECK(r512 <= 1e-5);
    CHECK(r256 / r512 == doctest::Approx(4.0).epsilon(0.125));
}

TEST_CASE("collar domain errors") {
    CHECK_THROWS_AS(collar_half_length(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(collar_half_length(1.0, -1.0), DomainError);
    CHECK_THROWS_AS(collar_half_length(std::nan(""), 1.0), DomainError);
    CHECK_THROWS_AS(collar_conformal_factor(1.0, 10.0 * kTwoPi), DomainError);
    CHECK_THROWS_AS(liouville_curvature_residual(std::vector<double>(16, 1.0), 4, 4, 0.1, 0.1), DomainError);
}

TEST_CASE("pinching threshold and decay fit") {
    CHECK(pinching_threshold(10.0, 1.0, 0.5, 3.0, 1.0) == doctest::Approx(10.0));
    CHECK_THROWS_AS(pinching_threshold(1.0, 1.0, 1.0, 3.0, 1.0), DomainError);
    CHECK_THROWS_AS(pinching_threshold(1.0, 1.0, 0.5, 0.5, 1.0), DomainError);

    std::vector<LengthSample> h = {{0.0, 1.0, 3.0}, {0.5, 0.2, 2.0}, {0.9, 0.05, 1.0}};
    const DecayFit f = geodesic_length_decay_fit(h, 1.0, 1.0);
    CHECK_FALSE(f.vacuous);
    CHECK(f.samples_used == 2);
    CHECK(f.C == doctest::Approx(std::max(1.0 / 2.0, 0.2 / 0.5)));
    const DecayFit v = geodesic_length_decay_fit({{0.0, 1.0, 1.0}}, 1.0, 1.0);
    CHECK(v.vacuous);
    CHECK_THROWS_AS(geodesic_length_decay_fit({{1.0, 1.0, 1.0}}, 1.0, 1.0), DomainError);
}

TEST_CASE("Gauss-Bonnet area and degeneration bookkeeping") {
    CHECK(gauss_bonnet_area({2, 0, 1}) == doctest::Approx(4.0 * std::numbers::pi));
    CHECK(gauss_bonnet_area({0, 3, 1}) == doctest::Approx(2.0 * std::numbers::pi));
    CHECK_THROWS_AS(gauss_bonnet_area({1, 0, 1}), DomainError);
    CHECK_THROWS_AS(gauss_bonnet_area({0, 2, 1}), DomainError);

    const auto nonsep = make_degeneration(2, 1, {{1, 2, 1}});
    CHECK(nonsep.puncture_count == 2);
    const auto pants = make_degeneration(2, 3, {{0, 3, 1}, {0, 3, 1}});
    CHECK(pants.puncture_count == 6);
    CHECK(pants.components.size() == 2);
    double area = 0.0;
    for (const auto& c : pants.components) area += gauss_bonnet_area(c);
    CHECK(area == doctest::Approx(gauss_bonnet_area({2, 0, 1})));

    CHECK_THROWS_AS(make_degeneration(1, 1, {}), DomainError);
    CHECK_THROWS_AS(make_degeneration(2, 4, {}), DomainError);
    CHECK_THROWS_AS(make_degeneration(2, 1, {{0, 3, 1}}), DomainError);
    CHECK_THROWS_AS(make_degeneration(2, 2, {{1, 2, 1}, {0, 2, 1}}), DomainError);
}

TEST_CASE("collar table rows and CSV header") {
    const auto rows = collar_table({0.5, 1.0}, {0.2, 1.0});
    REQUIRE(rows.size() == 4);
    CHECK(rows[2].X == 0.0);
    CHECK(rows[3].X == doctest::Approx(oracle_half_length(1.0, 1.0)));
    CHECK(rows[3].rho_min == doctest::Approx(1.0 / kTwoPi));
    const std::string csv = collar_table_csv(rows);
    CHECK(csv.rfind("ell,delta,X,rho_min,rho_boundary,identity_residual\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
