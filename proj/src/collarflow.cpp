#include "tmflow/collarflow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tmflow/error.hpp"
#include "tmflow/hypgeom.hpp"
#include "tmflow/synthetic.hpp"

namespace tmflow {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> row_rho(const CylinderDomain& dom, double ell) {
    std::vector<double> r(dom.ns);
    for (std::size_t i = 0; i < dom.ns; ++i) r[i] = collar_conformal_factor(ell, dom.s(i));
    return r;
}

// tau_g = rho^{-2} P_T(Lap_flat u) on interior rows.
SphereMapField g_tension(const SphereMapField& u, const CylinderDomain& dom, double ell) {
    SphereMapField t = flat_tension(u, dom);
    const auto rho = row_rho(dom, ell);
    for (std::size_t i = 1; i + 1 < dom.ns; ++i) {
        const double w = 1.0 / (rho[i] * rho[i]);
        for (std::size_t p = i * dom.ntheta * u.dim; p < (i + 1) * dom.ntheta * u.dim; ++p) t.data[p] *= w;
    }
    return t;
}

}  // namespace

CylinderDomain CylinderDomain::make(double X, std::size_t ntheta) {
    if (!(X > 0.0)) throw DomainError("cylinder half-length must be positive");
    if (ntheta < 8) throw DomainError("cylinder needs at least 8 points around the circle");
    CylinderDomain d;
    d.X = X;
    d.ntheta = ntheta;
    d.htheta = 2.0 * kPi / static_cast<double>(ntheta);
    const auto intervals = static_cast<std::size_t>(std::max(2.0, std::round(2.0 * X / d.htheta)));
    d.ns = intervals + 1;
    d.hs = 2.0 * X / static_cast<double>(intervals);
    return d;
}

double schedule_ell(const CollarConfig& cfg, double t) {
    if (cfg.schedule == "constant") return cfg.ell0;
    if (cfg.schedule == "linear") {
        if (!(t < cfg.T)) throw DomainError("collar length schedule exhausted (t >= T)");
        return cfg.ell0 * (1.0 - t / cfg.T);
    }
    throw DomainError("unknown collar schedule: " + cfg.schedule);
}

void validate(const CollarConfig& cfg) {
    std::vector<std::string> v;
    if (!(cfg.ell0 > 0.0)) v.push_back("ell0 must be positive");
    if (!(cfg.T > 0.0)) v.push_back("T must be positive");
    if (!(cfg.delta > 0.0)) v.push_back("delta must be positive");
    if (cfg.ell0 > 0.0 && cfg.delta > 0.0 && !(2.0 * cfg.delta > cfg.ell0))
        v.push_back("delta must exceed ell0/2 so that the initial collar window is nonempty");
    if (!(cfg.ell_floor > 0.0) || !(cfg.ell_floor < cfg.ell0)) v.push_back("ell_floor must lie in (0, ell0)");
    if (!(cfg.cfl_factor > 0.0) || cfg.cfl_factor > 0.25) v.push_back("cfl_factor must lie in (0, 0.25]");
    if (cfg.dt < 0.0) v.push_back("dt must be nonnegative");
    if (!(cfg.max_time > 0.0)) v.push_back("max_time must be positive");
    if (cfg.n_theta < 8) v.push_back("n_theta must be at least 8");
    if (cfg.target_dim < 2) v.push_back("target_dim must be at least 2");
    if (cfg.sample_every == 0) v.push_back("sample_every must be positive");
    if (cfg.schedule != "linear" && cfg.schedule != "constant") v.push_back("schedule must be 'linear' or 'constant'");
    static const char* presets[] = {"neck-bubble", "equator-wrap", "two-point", "perturbed", "constant"};
    if (std::find(std::begin(presets), std::end(presets), cfg.preset) == std::end(presets))
        v.push_back("unknown collar preset: " + cfg.preset);
    if (!v.empty()) throw ConfigError(v);
}

std::vector<double> cylinder_energy_density(const SphereMapField& u, const CylinderDomain& dom) {
    if (u.rows != dom.ns || u.cols != dom.ntheta) throw DomainError("field does not match the cylinder grid");
    const std::size_t ns = dom.ns, nt = dom.ntheta, d = u.dim;
    std::vector<double> es(ns * nt, 0.0), et(ns * nt, 0.0);
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < nt; ++j) {
            et[i * nt + j] = dist2(u.node(i, wrap_next(j, nt)), u.node(i, j), d) / (dom.htheta * dom.htheta);
            if (i + 1 < ns) es[i * nt + j] = dist2(u.node(i + 1, j), u.node(i, j), d) / (dom.hs * dom.hs);
        }
    std::vector<double> e(ns * nt);
    for (std::size_t i = 0; i < ns; ++i) {
        const double w = (i == 0 || i + 1 == ns) ? 0.5 : 1.0;
        for (std::size_t j = 0; j < nt; ++j) {
            double s_part = 0.5 * es[i * nt + j];
            if (i > 0) s_part += 0.5 * es[(i - 1) * nt + j];
            const double t_part = 0.5 * (et[i * nt + j] + et[i * nt + wrap_prev(j, nt)]);
            e[i * nt + j] = 0.5 * (s_part + w * t_part);
        }
    }
    return e;
}

double cylinder_energy(const SphereMapField& u, const CylinderDomain& dom) {
    double s = 0.0;
    for (double x : cylinder_energy_density(u, dom)) s += x;
    return s * dom.hs * dom.htheta;
}

double cylinder_energy_g(const SphereMapField& u, const CylinderDomain& dom, double ell) {
    const auto e = cylinder_energy_density(u, dom);
    const auto rho = row_rho(dom, ell);
    double s = 0.0;
    for (std::size_t i = 0; i < dom.ns; ++i) {
        const double r2 = rho[i] * rho[i];
        for (std::size_t j = 0; j < dom.ntheta; ++j) s += (e[i * dom.ntheta + j] / r2) * (r2 * dom.hs * dom.htheta);
    }
    return s;
}

SphereMapField flat_tension(const SphereMapField& u, const CylinderDomain& dom) {
    if (u.rows != dom.ns || u.cols != dom.ntheta) throw DomainError("field does not match the cylinder grid");
    const std::size_t nt = dom.ntheta, d = u.dim;
    const double cs = 1.0 / (dom.hs * dom.hs), ct = 1.0 / (dom.htheta * dom.htheta);
    SphereMapField t(dom.ns, nt, d);
    for (std::size_t i = 1; i + 1 < dom.ns; ++i)
        for (std::size_t j = 0; j < nt; ++j) {
            const double* c = u.node(i, j);
            const double* up = u.node(i + 1, j);
            const double* dn = u.node(i - 1, j);
            const double* e = u.node(i, wrap_next(j, nt));
            const double* w = u.node(i, wrap_prev(j, nt));
            double* o = t.node(i, j);
            for (std::size_t k = 0; k < d; ++k)
                o[k] = cs * (up[k] - 2.0 * c[k] + dn[k]) + ct * (e[k] - 2.0 * c[k] + w[k]);
            const double normal = dot(o, c, d);
            for (std::size_t k = 0; k < d; ++k) o[k] -= normal * c[k];
        }
    return t;
}

FlatTensionReport flat_gauge_tension(const CollarFlowState& s, const CylinderDomain& dom) {
    const SphereMapField tf = flat_tension(s.u, dom);
    const auto rho = row_rho(dom, s.ell);
    FlatTensionReport r;
    double flat2 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < dom.ns; ++i) {
        r.sup_rho = std::max(r.sup_rho, rho[i]);
        const double r2 = rho[i] * rho[i];
        for (std::size_t j = 0; j < dom.ntheta; ++j) {
            const double* v = tf.node(i, j);
            const double n2 = dot(v, v, tf.dim);
            flat2 += n2;
            const double tg2 = n2 / (r2 * r2);  // |rho^{-2} tau_flat|^2
            g2 += tg2 * r2;                      // against dA_g = rho^2 dA_flat
        }
    }
    r.flat_l2 = std::sqrt(flat2 * dom.hs * dom.htheta);
    r.g_l2 = std::sqrt(g2 * dom.hs * dom.htheta);
    r.margin = r.sup_rho * r.g_l2 - r.flat_l2;
    return r;
}

double collar_cfl_limit(const CylinderDomain& dom, double ell, double cfl_factor) {
    const double h = std::min(dom.hs, dom.htheta);
    const double rho_min = collar_conformal_factor(ell, 0.0);
    return cfl_factor * h * h * rho_min * rho_min;
}

CollarFlowState step_map_on_collar(const CollarFlowState& s, const CylinderDomain& dom, const CollarConfig& cfg,
                                   double dt) {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    const double ell0 = schedule_ell(cfg, s.t);
    if (dt > collar_cfl_limit(dom, ell0, cfg.cfl_factor) * (1.0 + 1e-12))
        throw DomainError("time step violates the collar CFL condition");
    const std::size_t lo = dom.ntheta * s.u.dim, hi = (dom.ns - 1) * dom.ntheta * s.u.dim;

    auto advance = [&](const SphereMapField& base, const SphereMapField& rate, double h) {
        SphereMapField out = base;
        for (std::size_t p = lo; p < hi; ++p) out.data[p] += h * rate.data[p];
        for (std::size_t i = 1; i + 1 < dom.ns; ++i)
            for (std::size_t j = 0; j < dom.ntheta; ++j) {
                double* v = out.node(i, j);
                const double n = std::sqrt(dot(v, v, out.dim));
                if (!(n > 0.0) || !std::isfinite(n)) throw NumericalAbort("non-finite map value on the collar");
                for (std::size_t k = 0; k < out.dim; ++k) v[k] /= n;
            }
        return out;
    };

    const SphereMapField k1 = g_tension(s.u, dom, ell0);
    const SphereMapField mid = advance(s.u, k1, 0.5 * dt);
    const SphereMapField k2 = g_tension(mid, dom, schedule_ell(cfg, s.t + 0.5 * dt));
    CollarFlowState out;
    out.t = s.t + dt;
    out.u = advance(s.u, k2, dt);
    out.ell = out.t < cfg.T || cfg.schedule == "constant" ? schedule_ell(cfg, out.t) : 0.0;
    return out;
}

ThinPartEnergy thin_part_energy(const CollarFlowState& s, const CylinderDomain& dom, double delta) {
    if (!(delta > 0.0)) throw DomainError("delta must be positive");
    ThinPartEnergy r;
    r.X = collar_half_length(s.ell, delta);
    const auto e = cylinder_energy_density(s.u, dom);
    const auto rho = row_rho(dom, s.ell);
    for (std::size_t i = 0; i < dom.ns; ++i) {
        if (std::abs(dom.s(i)) > r.X) continue;
        const double r2 = rho[i] * rho[i];
        for (std::size_t j = 0; j < dom.ntheta; ++j) {
            const double x = e[i * dom.ntheta + j];
            r.flat += x * dom.hs * dom.htheta;
            r.g_gauge += (x / r2) * (r2 * dom.hs * dom.htheta);
        }
    }
    return r;
}

SphereMapField make_collar_initial(const CollarConfig& cfg, const CylinderDomain& dom) {
    const std::size_t dim = static_cast<std::size_t>(cfg.target_dim) + 1;
    SphereMapField u(dom.ns, dom.ntheta, dim);
    auto embed = [&](const SphereMapField& f3) {
        for (std::size_t p = 0; p < f3.nodes(); ++p)
            for (std::size_t k = 0; k < 3; ++k) u.data[p * dim + k] = f3.data[p * 3 + k];
    };
    if (cfg.preset == "neck-bubble" || cfg.preset == "perturbed") {
        embed(make_neck_bubble(dom.ns, dom.ntheta, dom.X, 0.0));
        if (cfg.preset == "perturbed") {
            std::mt19937_64 rng(cfg.seed);
            std::normal_distribution<double> noise(0.0, 1.0);
            for (std::size_t i = 1; i + 1 < dom.ns; ++i) {
                const double taper = std::sin(kPi * static_cast<double>(i) / static_cast<double>(dom.ns - 1));
                for (std::size_t j = 0; j < dom.ntheta; ++j)
                    for (std::size_t k = 0; k < dim; ++k) u.node(i, j)[k] += cfg.perturbation * taper * noise(rng);
            }
        }
    } else if (cfg.preset == "equator-wrap") {
        for (std::size_t i = 0; i < dom.ns; ++i)
            for (std::size_t j = 0; j < dom.ntheta; ++j) {
                const double th = dom.htheta * static_cast<double>(j);
                u.node(i, j)[0] = std::cos(th);
                u.node(i, j)[1] = std::sin(th);
            }
    } else if (cfg.preset == "two-point") {
        for (std::size_t i = 0; i < dom.ns; ++i) {
            const double x = (dom.s(i) + dom.X) / (2.0 * dom.X);
            const double polar = 0.3 + 1.4 * x;
            const double bump = std::sin(kPi * x);
            for (std::size_t j = 0; j < dom.ntheta; ++j) {
                const double th = dom.htheta * static_cast<double>(j);
                const double az = cfg.perturbation * 10.0 * bump * std::sin(th);
                double* v = u.node(i, j);
                v[0] = std::sin(polar) * std::cos(az);
                v[1] = std::sin(polar) * std::sin(az);
                v[2] = std::cos(polar);
            }
        }
    } else if (cfg.preset == "constant") {
        for (std::size_t p = 0; p < u.nodes(); ++p) u.data[p * dim + 2] = 1.0;
    } else {
        throw ConfigError({"unknown collar preset: " + cfg.preset});
    }
    u.normalize();
    return u;
}

CollarRunResult run_collar(const CollarConfig& cfg) {
    validate(cfg);
    CollarRunResult res;
    const double X0 = collar_half_length(cfg.ell0, cfg.delta);
    res.dom = CylinderDomain::make(X0, cfg.n_theta);
    const CylinderDomain& dom = res.dom;

    CollarFlowState s;
    s.t = 0.0;
    s.ell = schedule_ell(cfg, 0.0);
    s.u = make_collar_initial(cfg, dom);
    const std::vector<double> bottom(s.u.data.begin(), s.u.data.begin() + static_cast<std::ptrdiff_t>(dom.ntheta * s.u.dim));
    const std::vector<double> top(s.u.data.end() - static_cast<std::ptrdiff_t>(dom.ntheta * s.u.dim), s.u.data.end());

    res.min_tension_margin = std::numeric_limits<double>::infinity();
    auto record = [&](const CollarFlowState& st) {
        const FlatTensionReport tr = flat_gauge_tension(st, dom);
        const double E = cylinder_energy(st.u, dom);
        const double Eg = cylinder_energy_g(st.u, dom, st.ell);
        if (E > 0.0) res.max_gauge_defect = std::max(res.max_gauge_defect, std::abs(E - Eg) / E);
        res.history.samples.push_back({st.t, E, tr.g_l2, 0.0, X0, st.ell, 0.5 * st.ell, 0.0,
                                       std::numeric_limits<double>::quiet_NaN()});
        res.tension_reports.push_back(tr);
        res.min_tension_margin = std::min(res.min_tension_margin, tr.margin);
    };
    auto boundary_ok = [&](const CollarFlowState& st) {
        return std::equal(bottom.begin(), bottom.end(), st.u.data.begin()) &&
               std::equal(top.begin(), top.end(), st.u.data.end() - static_cast<std::ptrdiff_t>(top.size()));
    };

    record(s);
    res.snapshots.push_back(s);
    std::size_t steps = 0;
    res.status = "timeout";
    for (;;) {
        const bool schedule_done = cfg.schedule == "linear" && !(s.t < cfg.T);
        if (schedule_done || s.ell <= cfg.ell_floor) {
            res.status = "pinched";
            break;
        }
        if (s.t >= cfg.max_time) break;
        double dt = collar_cfl_limit(dom, s.ell, cfg.cfl_factor);
        if (cfg.dt > 0.0) dt = std::min(dt, cfg.dt);
        dt = std::min(dt, cfg.max_time - s.t);
        if (cfg.schedule == "linear") dt = std::min(dt, cfg.T - s.t);
        s = step_map_on_collar(s, dom, cfg, dt);
        ++steps;
        if (!boundary_ok(s)) res.boundary_rows_intact = false;
        if (steps % cfg.sample_every == 0) record(s);
        if (cfg.snapshot_every > 0 && steps % cfg.snapshot_every == 0) res.snapshots.push_back(s);
    }
    if (res.history.samples.back().t != s.t) record(s);
    if (res.snapshots.back().t != s.t) res.snapshots.push_back(s);
    res.final_state = s;
    return res;
}

}  // namespace tmflow
