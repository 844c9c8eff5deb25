#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tmflow/collarflow.hpp"
#include "tmflow/error.hpp"
#include "tmflow/hypgeom.hpp"

using namespace tmflow;

namespace {

constexpr double kPi = std::numbers::pi;

// A conformal degree-1 map covers area 4 pi R^2/(1+R^2) inside |w| < R, so the
// neck e^{s + i theta} restricted to |s| < X has energy 4 pi tanh X.
double neck_energy_oracle(double X) { return 4.0 * kPi * std::tanh(X); }

}  // namespace

TEST_CASE("domain and schedule") {
    const CollarConfig cfg;
    const double X0 = collar_half_length(cfg.ell0, cfg.delta);
    const auto dom = CylinderDomain::make(X0, 32);
    CHECK(dom.s(0) == doctest::Approx(-X0));
    CHECK(dom.s(dom.ns - 1) == doctest::Approx(X0));
    CHECK(dom.htheta == doctest::Approx(2.0 * kPi / 32.0));
    CHECK(schedule_ell(cfg, 0.0) == cfg.ell0);
    CHECK(schedule_ell(cfg, 0.5) == doctest::Approx(0.5 * cfg.ell0));
    CollarConfig flat = cfg;
    flat.schedule = "constant";
    CHECK(schedule_ell(flat, 0.7) == cfg.ell0);
}

TEST_CASE("neck bubble energy and gauge invariance") {
    CollarConfig cfg;
    const double X0 = collar_half_length(cfg.ell0, cfg.delta);
    const auto dom = CylinderDomain::make(X0, 64);
    const auto u = make_collar_initial(cfg, dom);
    const double E = cylinder_energy(u, dom);
    CHECK(E == doctest::Approx(neck_energy_oracle(X0)).epsilon(0.01));
    CHECK(cylinder_energy_g(u, dom, 0.37) == doctest::Approx(E).epsilon(1e-13));
    const auto d = cylinder_energy_density(u, dom);
    double s = 0.0;
    for (double v : d) s += v;
    CHECK(s * dom.hs * dom.htheta == doctest::Approx(E).epsilon(1e-13));
}

TEST_CASE("pinching run: tension scaling margin and boundary loops") {
    CollarConfig cfg;
    const auto r = run_collar(cfg);
    CHECK(r.status == "pinched");
    CHECK(r.final_state.t < cfg.T);
    CHECK(r.final_state.ell == doctest::Approx(cfg.ell_floor).epsilon(1e-4));
    CHECK(r.min_tension_margin >= -1e-12);
    REQUIRE(r.tension_reports.size() == r.history.samples.size());
    for (const auto& tr : r.tension_reports) {
        CHECK(tr.margin >= -1e-12);
        CHECK(tr.sup_rho > 0.0);
    }
    CHECK(r.boundary_rows_intact);
    CHECK(r.max_gauge_defect <= 1e-12);
    for (std::size_t k = 1; k < r.history.samples.size(); ++k)
        CHECK(r.history.samples[k].E <= r.history.samples[k - 1].E * (1.0 + 1e-12));
    const auto thin = thin_part_energy(r.final_state, r.dom, cfg.delta);
    CHECK(thin.flat == doctest::Approx(thin.g_gauge).epsilon(1e-12));
}

TEST_CASE("tension margin holds on every preset") {
    for (const char* preset : {"equator-wrap", "two-point", "perturbed", "constant"}) {
        CAPTURE(preset);
        CollarConfig cfg;
        cfg.preset = preset;
        cfg.max_time = 0.15;
        const auto r = run_collar(cfg);
        CHECK(r.status == "timeout");
        CHECK(r.min_tension_margin >= -1e-12);
        CHECK(r.boundary_rows_intact);
        CHECK(r.final_state.u.max_norm_defect() <= 1e-12);
    }
}

TEST_CASE("run is deterministic") {
    CollarConfig cfg;
    cfg.preset = "perturbed";
    cfg.max_time = 0.05;
    const auto a = run_collar(cfg);
    const auto b = run_collar(cfg);
    REQUIRE(a.history.samples.size() == b.history.samples.size());
    for (std::size_t k = 0; k < a.history.samples.size(); ++k) CHECK(a.history.samples[k].E == b.history.samples[k].E);
    CHECK(a.final_state.u.data == b.final_state.u.data);
}

TEST_CASE("validation lists every violation") {
    CollarConfig cfg;
    cfg.ell0 = -1.0;
    cfg.cfl_factor = 0.9;
    cfg.preset = "nonsense";
    try {
        validate(cfg);
        FAIL("validate accepted an invalid config");
    } catch (const ConfigError& e) {
        CHECK(e.violations().size() >= 3);
    }
    CHECK_NOTHROW(validate(CollarConfig{}));
    CHECK_THROWS_AS(run_collar(cfg), ConfigError);

    CollarConfig ok;
    const auto dom = CylinderDomain::make(collar_half_length(ok.ell0, ok.delta), ok.n_theta);
    CollarFlowState s{0.0, ok.ell0, make_collar_initial(ok, dom)};
    CHECK_THROWS_AS(step_map_on_collar(s, dom, ok, 10.0 * collar_cfl_limit(dom, ok.ell0, 0.25)), DomainError);
}
