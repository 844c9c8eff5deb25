#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tmflow/error.hpp"
#include "tmflow/torusflow.hpp"

using namespace tmflow;

namespace {

constexpr double kPi = std::numbers::pi;

// Discrete Dirichlet energy of x -> (cos 2 pi x, sin 2 pi x) on an N-grid:
// each x-edge has chord 2 sin(pi/N), so E = g^xx/2 * (2 N sin(pi/N))^2.
double wrap_energy_oracle(std::size_t N, const TorusModulus& g) {
    const double n = static_cast<double>(N);
    const double chord = 2.0 * n * std::sin(kPi / n);
    return 0.5 * (g.a * g.a + g.b * g.b) / g.b * chord * chord;
}

SphereMapField wrap_along_y(std::size_t N) {
    SphereMapField u(N, N, 3);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double y = static_cast<double>(i) / static_cast<double>(N);
            u.node(i, j)[0] = std::cos(2.0 * kPi * y);
            u.node(i, j)[1] = std::sin(2.0 * kPi * y);
        }
    return u;
}

FlowConfig coupled(std::size_t N, double max_time) {
    FlowConfig c;
    c.N = N;
    c.eta = 1.0;
    c.max_time = max_time;
    c.sample_every = 4;
    return c;
}

}  // namespace

TEST_CASE("modulus metric is unit area and inverts") {
    const TorusModulus g{0.3, 1.7};
    const auto m = g.metric();
    const auto mi = g.inverse_metric();
    CHECK(g.det() == doctest::Approx(1.0));
    CHECK(m[0] * mi[0] + m[1] * mi[1] == doctest::Approx(1.0));
    CHECK(m[0] * mi[1] + m[1] * mi[2] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(g.min_eigenvalue() > 0.0);
    CHECK(injectivity_radius(TorusModulus{0.0, 1.0}) == doctest::Approx(0.5));
}

TEST_CASE("wrap map energy matches the discrete chord oracle") {
    for (const TorusModulus g : {TorusModulus{0.0, 1.0}, TorusModulus{0.4, 0.8}, TorusModulus{-0.2, 2.5}}) {
        for (std::size_t N : {16, 64}) {
            const auto u = make_wrap_map(N, 2);
            CHECK(energy(u, g) == doctest::Approx(wrap_energy_oracle(N, g)).epsilon(1e-12));
            const auto e = energy_density(u, g);
            double s = 0.0;
            for (double v : e) s += v;
            CHECK(s / static_cast<double>(N * N) == doctest::Approx(energy(u, g)).epsilon(1e-14));
        }
    }
    CHECK(energy(make_wrap_map(256, 2), {0.0, 1.0}) == doctest::Approx(2.0 * kPi * kPi).epsilon(1e-4));
    CHECK(energy(make_constant_map(32, 2), {0.0, 1.0}) == 0.0);
}

TEST_CASE("geodesic wrap is stationary at tau = i") {
    const TorusModulus g{0.0, 1.0};
    const std::size_t N = 64;
    const auto u = make_wrap_map(N, 2);
    CHECK(sup_norm(tension_field(u, g)) <= 1e-10);

    FlowConfig cfg = coupled(N, 0.01);
    cfg.eta = 0.0;
    FlowState s{0.0, u, g};
    const double dt = cfl_limit(g, N, cfg.cfl_factor);
    for (int k = 0; k < 20; ++k) s = step(s, dt, cfg).state;
    double diff = 0.0;
    for (std::size_t p = 0; p < u.data.size(); ++p) diff = std::max(diff, std::abs(s.u.data[p] - u.data[p]));
    CHECK(diff <= 1e-12);
    CHECK(s.g.a == 0.0);
    CHECK(s.g.b == 1.0);
}

TEST_CASE("Hopf projection flips sign between the two wrap directions") {
    const TorusModulus g{0.0, 1.0};
    const std::size_t N = 32;
    const auto cx = project_holomorphic(hopf_differential(make_wrap_map(N, 2), g), g);
    const auto cy = project_holomorphic(hopf_differential(wrap_along_y(N), g), g);
    CHECK(cx.real() > 0.0);
    CHECK(std::abs(cx.imag()) <= 1e-12 * std::abs(cx));
    CHECK(cy.real() == doctest::Approx(-cx.real()).epsilon(1e-12));
    CHECK(std::abs(project_holomorphic(hopf_differential(make_constant_map(N, 2), g), g)) == 0.0);
    // the metric responds by stretching b when the map wraps in x
    const auto mv = metric_velocity(make_wrap_map(N, 2), g, 1.0);
    CHECK(mv.projection_l2 > 0.0);
    CHECK(mv.speed > 0.0);
}

TEST_CASE("coupled flow: energy identity residual converges under refinement") {
    double prev = 0.0;
    for (std::size_t N : {16, 32, 64}) {
        FlowState s{0.0, make_wrap_perturbed(N, 2, 0.05, 1), {0.0, 1.0}};
        const auto r = run_torus(s, coupled(N, 0.02));
        const double res = energy_identity_residual(r.history, 1.0);
        if (N == 64) CHECK(res <= 1e-2);
        if (prev > 0.0) CHECK(prev / res >= 2.0);
        prev = res;
        CHECK(r.max_energy_increase <= 0.0);
        CHECK(r.max_norm_defect <= 1e-12);
    }
}

TEST_CASE("coupled flow: horizontal bound holds at every sample") {
    FlowState s{0.0, make_wrap_perturbed(32, 2, 0.05, 3), {0.2, 1.1}};
    const auto r = run_torus(s, coupled(32, 0.05));
    const auto hz = horizontal_diagnostics(r.history, 1.0);
    CHECK(hz.bound_holds);
    REQUIRE(hz.L.size() == r.history.samples.size());
    for (std::size_t k = 0; k < hz.L.size(); ++k) CHECK(hz.L[k] * hz.L[k] <= hz.rhs[k] * (1.0 + 1e-12) + 1e-300);
}

TEST_CASE("run is deterministic and records snapshots") {
    FlowConfig cfg = coupled(32, 0.01);
    cfg.snapshot_every = 10;
    FlowState s{0.0, make_wrap_perturbed(32, 2, 0.05, 7), {0.0, 1.0}};
    const auto a = run_torus(s, cfg);
    const auto b = run_torus(s, cfg);
    REQUIRE(a.history.samples.size() == b.history.samples.size());
    for (std::size_t k = 0; k < a.history.samples.size(); ++k) {
        CHECK(a.history.samples[k].E == b.history.samples[k].E);
        CHECK(a.history.samples[k].b == b.history.samples[k].b);
    }
    CHECK(a.snapshots.size() >= 2);
    CHECK(a.snapshots.front().t == 0.0);
    CHECK(a.snapshots.back().t == a.final_state.t);
    CHECK(a.status == "timeout");
}

TEST_CASE("precondition violations") {
    const TorusModulus g{0.0, 1.0};
    FlowConfig cfg = coupled(16, 0.01);
    FlowState s{0.0, make_wrap_map(16, 2), g};
    CHECK_THROWS_AS(step(s, 10.0 * cfl_limit(g, 16, 0.25), cfg), DomainError);
    CHECK_THROWS_AS(make_wrap_map(16, 0), DomainError);
    CHECK_THROWS_AS(make_wrap_perturbed(16, 1, 0.1, 1), DomainError);
    SphereMapField bad = make_wrap_map(16, 2);
    bad.data[0] = std::nan("");
    CHECK_THROWS_AS(bad.normalize(), NumericalAbort);
}
