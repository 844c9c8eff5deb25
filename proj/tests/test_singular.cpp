#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "tmflow/error.hpp"
#include "tmflow/hypgeom.hpp"
#include "tmflow/singular.hpp"
#include "tmflow/synthetic.hpp"

using namespace tmflow;

namespace {

constexpr double kPi = std::numbers::pi;

// 1/2 integral over the plane of |d(stereographic inverse of z/lambda)|^2,
// with r = lambda tan(phi) and composite 8-point Gauss-Legendre in phi.
double stereographic_energy_oracle(double lambda) {
    static const std::array<double, 8> x = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                            -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                            0.7966664774136267,  0.9602898564975363};
    static const std::array<double, 8> w = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                            0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                            0.2223810344533745, 0.1012285362903763};
    auto integrand = [&](double phi) {
        const double r = lambda * std::tan(phi);
        const double dr = lambda / (std::cos(phi) * std::cos(phi));
        const double density = 8.0 * lambda * lambda / std::pow(lambda * lambda + r * r, 2);
        return 0.5 * density * 2.0 * kPi * r * dr;
    };
    const int panels = 64;
    const double a = 0.0, b = 0.5 * kPi, h = (b - a) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        for (std::size_t k = 0; k < x.size(); ++k) sum += 0.5 * h * w[k] * integrand(mid + 0.5 * h * x[k]);
    }
    return sum;
}

struct CylinderCase {
    std::size_t ntheta;
    CylinderDomain dom;
    GridGeometry geo;
    SphereMapField u;
};

CylinderCase curve_with_bubble(std::size_t ntheta) {
    CylinderCase c;
    c.ntheta = ntheta;
    c.dom = CylinderDomain::make(6.0, ntheta);
    c.geo = cylinder_geometry(c.dom);
    c.u = make_curve_with_bubbles(c.dom.ns, ntheta, 6.0, 0.3, 1.2, {{0.0, 0.0, 0.15}});
    return c;
}

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

TEST_CASE("quadrature oracle reproduces the bubble energy") {
    const double E = stereographic_energy_oracle(0.025);
    CHECK(E == doctest::Approx(4.0 * kPi).epsilon(1e-10));
    CHECK(stereographic_energy_oracle(3.0) == doctest::Approx(E).epsilon(1e-10));
}

TEST_CASE("cutoff profile") {
    CHECK(cutoff_profile(0.0) == 1.0);
    CHECK(cutoff_profile(0.5) == 1.0);
    CHECK(cutoff_profile(1.0) == 0.0);
    CHECK(cutoff_profile(2.0) == 0.0);
    double worst = 0.0;
    for (int k = 0; k <= 1000; ++k) worst = std::max(worst, std::abs(cutoff_profile_derivative(k / 1000.0)));
    CHECK(worst <= 3.0 + 1e-12);
    const TorusModulus g{0.0, 1.0};
    const auto w = cutoff_weights(64, g, {0.5, 0.5, 0.25});
    CHECK(w[32 * 64 + 32] == 1.0);
    CHECK(w[0] == 0.0);
}

TEST_CASE("node energies sum to the torus energy") {
    const TorusModulus g{0.3, 1.2};
    const auto u = make_wrap_perturbed(32, 2, 0.1, 5);
    CHECK(sum(node_energies(u, torus_geometry(32, g))) == doctest::Approx(energy(u, g)).epsilon(1e-13));
}

TEST_CASE("synthetic torus bubble is detected, centred and recovered") {
    const std::size_t N = 256;
    const double lambda = 0.025;
    const auto u = make_torus_bubble(N, 0.5, 0.5, lambda);
    const auto geo = torus_geometry(N, {0.0, 1.0});
    const auto ne = node_energies(u, geo);
    const std::vector<std::vector<double>> history(5, ne);
    const auto pts = detect_concentration_points(history, geo, 1.0, {0.2, 0.1, 0.05});
    REQUIRE(pts.size() == 1);
    CHECK(std::abs(static_cast<double>(pts[0].row) - 128.0) <= 1.0);
    CHECK(std::abs(static_cast<double>(pts[0].col) - 128.0) <= 1.0);

    const double scale = estimate_scale(ne, geo, pts[0].row, pts[0].col, 0.2);
    CHECK(scale == doctest::Approx(lambda).epsilon(0.1));
    const auto bubble = extract_bubble(u, geo, pts[0].row, pts[0].col, scale);
    CHECK(bubble.accepted);
    CHECK(bubble.reason.empty());
    const double oracle = stereographic_energy_oracle(lambda);
    CHECK(std::abs(bubble.energy / oracle - 1.0) <= 0.02);

    const auto shifted = extract_bubble(u, geo, pts[0].row, (pts[0].col + 19) % N, scale);
    CHECK_FALSE(shifted.accepted);
    CHECK(shifted.reason == "misaligned window");
}

TEST_CASE("no spurious detections on smooth maps") {
    const TorusModulus g{0.0, 1.0};
    for (const auto& u : {make_wrap_map(64, 2), make_wrap_perturbed(64, 2, 0.05, 1), make_constant_map(64, 2)}) {
        const auto geo = torus_geometry(64, g);
        const std::vector<std::vector<double>> history(5, node_energies(u, geo));
        CHECK(detect_concentration_points(history, geo, 1.0, {0.2, 0.1, 0.05}).empty());
    }
    FlowConfig cfg;
    cfg.N = 32;
    cfg.max_time = 0.05;
    cfg.snapshot_every = 20;
    const auto run = run_torus({0.0, make_wrap_perturbed(32, 2, 0.05, 2), g}, cfg);
    std::vector<std::vector<double>> snaps;
    for (const auto& s : run.snapshots) snaps.push_back(node_energies(s.u, torus_geometry(32, s.g)));
    CHECK(detect_concentration_points(snaps, torus_geometry(32, run.final_state.g), 1.0, {0.2, 0.1, 0.05}).empty());
}

TEST_CASE("concentration must persist across the last snapshots") {
    const std::size_t N = 128;
    const auto geo = torus_geometry(N, {0.0, 1.0});
    const auto bubble = node_energies(make_torus_bubble(N, 0.5, 0.5, 0.04), geo);
    const auto flat = node_energies(make_constant_map(N, 2), geo);
    std::vector<std::vector<double>> h = {bubble, bubble, bubble, bubble, flat};
    CHECK(detect_concentration_points(h, geo, 1.0, {0.2, 0.1, 0.05}, 5).empty());
    CHECK(detect_concentration_points(h, geo, 1.0, {0.2, 0.1, 0.05}, 1).empty());
    h.back() = bubble;
    CHECK(detect_concentration_points(h, geo, 1.0, {0.2, 0.1, 0.05}, 5).size() == 1);
}

TEST_CASE("bubble branch on the curve+bubble cylinder") {
    const auto coarse = curve_with_bubble(192);
    const auto fine = curve_with_bubble(384);
    const auto rc = segment_bubble_branch(coarse.u, coarse.geo);
    const auto rf = segment_bubble_branch(fine.u, fine.geo);
    for (const auto* r : {&rc, &rf}) {
        REQUIRE(r->segments.size() == 3);
        CHECK_FALSE(r->segments[0].bubble_region);
        CHECK(r->segments[1].bubble_region);
        CHECK_FALSE(r->segments[2].bubble_region);
        CHECK(r->segments[0].max_osc <= 0.1);
        CHECK(r->segments[2].max_osc <= 0.1);
        std::size_t accepted = 0;
        for (const auto& c : r->candidates) accepted += c.accepted ? 1 : 0;
        CHECK(accepted == 1);
        CHECK(r->segment_energy_sum == doctest::Approx(r->total_energy).epsilon(1e-10));
    }
    REQUIRE(rc.splits.size() == 2);
    REQUIRE(rf.splits.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(rc.splits[k] - rf.splits[k]) <= coarse.geo.hy);
    for (const auto& c : rf.candidates)
        if (c.accepted) CHECK(std::abs(c.energy / stereographic_energy_oracle(0.15) - 1.0) <= 0.05);
}

TEST_CASE("circle oscillation is the largest chord on a row") {
    SphereMapField u(1, 8, 3);
    for (std::size_t j = 0; j < 8; ++j) {
        const double a = 2.0 * kPi * static_cast<double>(j) / 8.0;
        u.node(0, j)[0] = std::cos(a);
        u.node(0, j)[1] = std::sin(a);
    }
    CHECK(circle_oscillation(u, 0) == doctest::Approx(2.0));
}

TEST_CASE("good times are running minima and the tension integral is bounded") {
    FlowHistory h;
    const double tv[] = {5.0, 3.0, 4.0, 2.0, 2.0, 6.0, 1.0};
    for (int k = 0; k < 7; ++k) h.samples.push_back({0.1 * k, 10.0 - k, tv[k], 0, 0, 1, 0.5, 0, 0});
    const auto g = select_good_times(h, 1.0);
    CHECK(g.indices == std::vector<std::size_t>{0, 1, 3, 4, 6});
    double integral = 0.0;
    for (int k = 1; k < 7; ++k) integral += 0.05 * (tv[k] * tv[k] + tv[k - 1] * tv[k - 1]);
    CHECK(g.tension_integral == doctest::Approx(integral));
    CHECK(g.E0 == 10.0);
    CHECK(g.integral_ok);
    for (auto& smp : h.samples) smp.tension_l2 *= 2.0;
    CHECK_FALSE(select_good_times(h, 1.0).integral_ok);
}

TEST_CASE("energy ledger is additive and thin energy tracks the neck bubble") {
    CollarConfig cfg;
    cfg.snapshot_every = 100;
    const auto run = run_collar(cfg);
    REQUIRE(run.status == "pinched");
    const auto geo = cylinder_geometry(run.dom);
    std::vector<LedgerSnapshot> snaps;
    for (const auto& s : run.snapshots) {
        LedgerSnapshot ls;
        ls.t = s.t;
        ls.node_energy = node_energies(s.u, geo);
        ls.E = sum(ls.node_energy);
        const double ell = s.ell;
        const auto dom = run.dom;
        ls.thin_mask = [ell, dom](double delta) {
            const double X = collar_half_length(ell, delta);
            std::vector<bool> m(dom.ns * dom.ntheta);
            for (std::size_t i = 0; i < dom.ns; ++i)
                for (std::size_t j = 0; j < dom.ntheta; ++j) m[i * dom.ntheta + j] = std::abs(dom.s(i)) <= X;
            return m;
        };
        snaps.push_back(ls);
    }
    const double E_final = cylinder_energy(run.final_state.u, run.dom);
    CHECK(snaps.back().E == doctest::Approx(E_final).epsilon(1e-12));
    const double X = run.dom.X;
    const double neck = 4.0 * kPi * std::tanh(X);
    const auto L = energy_ledger(snaps, cfg.T, {0.8, 0.4, 0.2, 0.1}, 10.0, {neck});
    CHECK(std::abs(L.E_thick + L.E_thin - L.E_T) <= 1e-10 * L.E_T);
    CHECK(L.additivity_defect <= 1e-10);
    CHECK(std::abs(L.E_thin / neck - 1.0) <= 0.05);
    CHECK(L.bubble_total == neck);
    CHECK_THROWS_AS(energy_ledger({}, 1.0, {0.1}, 10.0, {}), DomainError);
}
