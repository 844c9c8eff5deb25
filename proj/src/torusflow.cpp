#include "tmflow/torusflow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tmflow/error.hpp"

namespace tmflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_square(const SphereMapField& u) {
    if (u.rows != u.cols || u.rows < 3) throw DomainError("torus fields must be square with N >= 3");
}

// Per-node split pullback entries (S_xx, S_xy, S_yy): forward/backward edge
// halves for the diagonal entries, centered differences for the cross term.
void nodal_pullback(const SphereMapField& u, std::vector<std::array<double, 3>>& S) {
    const std::size_t N = u.rows, d = u.dim;
    const double invh = static_cast<double>(N);
    S.assign(N * N, {0.0, 0.0, 0.0});
    std::vector<double> fx(N * N), fy(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            fx[i * N + j] = dist2(u.node(i, wrap_next(j, N)), u.node(i, j), d) * invh * invh;
            fy[i * N + j] = dist2(u.node(wrap_next(i, N), j), u.node(i, j), d) * invh * invh;
        }
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t ip = wrap_next(i, N), im = wrap_prev(i, N);
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t jp = wrap_next(j, N), jm = wrap_prev(j, N);
            auto& s = S[i * N + j];
            s[0] = 0.5 * (fx[i * N + j] + fx[i * N + jm]);
            s[2] = 0.5 * (fy[i * N + j] + fy[im * N + j]);
            double cross = 0.0;
            const double* xp = u.node(i, jp);
            const double* xm = u.node(i, jm);
            const double* yp = u.node(ip, j);
            const double* ym = u.node(im, j);
            for (std::size_t k = 0; k < d; ++k) cross += (xp[k] - xm[k]) * (yp[k] - ym[k]);
            s[1] = cross * 0.25 * invh * invh;
        }
    }
}

std::complex<double> hopf_from_pullback(double Sxx, double Sxy, double Syy, const TorusModulus& g) {
    const std::complex<double> tb = std::conj(g.tau());
    return (Syy - 2.0 * tb * Sxy + tb * tb * Sxx) / (-4.0 * g.b * g.b);
}

}  // namespace

std::array<double, 3> TorusModulus::metric() const { return {1.0 / b, a / b, (a * a + b * b) / b}; }

std::array<double, 3> TorusModulus::inverse_metric() const { return {(a * a + b * b) / b, -a / b, 1.0 / b}; }

double TorusModulus::det() const {
    const auto m = metric();
    return m[0] * m[2] - m[1] * m[1];
}

double TorusModulus::min_eigenvalue() const {
    const auto m = metric();
    const double tr = m[0] + m[2];
    const double disc = std::sqrt(std::max(0.0, 0.25 * (m[0] - m[2]) * (m[0] - m[2]) + m[1] * m[1]));
    return 0.5 * tr - disc;
}

std::vector<double> energy_density(const SphereMapField& u, const TorusModulus& g) {
    check_square(u);
    std::vector<std::array<double, 3>> S;
    nodal_pullback(u, S);
    const auto gi = g.inverse_metric();
    std::vector<double> e(S.size());
    for (std::size_t p = 0; p < S.size(); ++p)
        e[p] = 0.5 * (gi[0] * S[p][0] + 2.0 * gi[1] * S[p][1] + gi[2] * S[p][2]);
    return e;
}

double energy(const SphereMapField& u, const TorusModulus& g) {
    const auto e = energy_density(u, g);
    double s = 0.0;
    for (double v : e) s += v;
    return s / static_cast<double>(e.size());
}

SphereMapField laplacian(const SphereMapField& u, const TorusModulus& g) {
    check_square(u);
    const std::size_t N = u.rows, d = u.dim;
    const auto gi = g.inverse_metric();
    const double h2inv = static_cast<double>(N) * static_cast<double>(N);
    const double cxx = gi[0] * h2inv, cyy = gi[2] * h2inv, cxy = 2.0 * gi[1] * 0.25 * h2inv;
    SphereMapField out(N, N, d);
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t ip = wrap_next(i, N), im = wrap_prev(i, N);
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t jp = wrap_next(j, N), jm = wrap_prev(j, N);
            const double* c = u.node(i, j);
            const double* e = u.node(i, jp);
            const double* w = u.node(i, jm);
            const double* n = u.node(ip, j);
            const double* s = u.node(im, j);
            const double* ne = u.node(ip, jp);
            const double* nw = u.node(ip, jm);
            const double* se = u.node(im, jp);
            const double* sw = u.node(im, jm);
            double* o = out.node(i, j);
            for (std::size_t k = 0; k < d; ++k)
                o[k] = cxx * (e[k] - 2.0 * c[k] + w[k]) + cyy * (n[k] - 2.0 * c[k] + s[k]) +
                       cxy * (ne[k] - nw[k] - se[k] + sw[k]);
        }
    }
    return out;
}

SphereMapField tension_field(const SphereMapField& u, const TorusModulus& g) {
    SphereMapField t = laplacian(u, g);
    for (std::size_t p = 0; p < u.nodes(); ++p) {
        const double* un = u.data.data() + p * u.dim;
        double* tn = t.data.data() + p * u.dim;
        const double normal = dot(tn, un, u.dim);
        for (std::size_t k = 0; k < u.dim; ++k) tn[k] -= normal * un[k];
    }
    return t;
}

double l2_norm(const SphereMapField& f) {
    double s = 0.0;
    for (double x : f.data) s += x * x;
    return std::sqrt(s / static_cast<double>(f.nodes()));
}

double sup_norm(const SphereMapField& f) {
    double worst = 0.0;
    for (std::size_t p = 0; p < f.nodes(); ++p) {
        const double* v = f.data.data() + p * f.dim;
        worst = std::max(worst, std::sqrt(dot(v, v, f.dim)));
    }
    return worst;
}

std::array<double, 3> pullback_means(const SphereMapField& u) {
    check_square(u);
    std::vector<std::array<double, 3>> S;
    nodal_pullback(u, S);
    std::array<double, 3> m{0.0, 0.0, 0.0};
    for (const auto& s : S)
        for (int k = 0; k < 3; ++k) m[k] += s[k];
    for (auto& x : m) x /= static_cast<double>(S.size());
    return m;
}

std::vector<std::complex<double>> hopf_differential(const SphereMapField& u, const TorusModulus& g) {
    check_square(u);
    std::vector<std::array<double, 3>> S;
    nodal_pullback(u, S);
    std::vector<std::complex<double>> phi(S.size());
    for (std::size_t p = 0; p < S.size(); ++p) phi[p] = hopf_from_pullback(S[p][0], S[p][1], S[p][2], g);
    return phi;
}

std::complex<double> project_holomorphic(const std::vector<std::complex<double>>& phi, const TorusModulus&) {
    if (phi.empty()) throw DomainError("empty Hopf differential field");
    std::complex<double> s{0.0, 0.0};
    for (const auto& v : phi) s += v;
    return s / static_cast<double>(phi.size());
}

double quadratic_differential_norm(std::complex<double> c, const TorusModulus& g) {
    // |dz|_g^2 = 2b on g = b^{-1}|dz|^2, and the torus has unit area.
    return 2.0 * g.b * std::abs(c);
}

std::array<double, 3> real_part_tensor(std::complex<double> c, const TorusModulus& g) {
    const std::complex<double> t = g.tau();
    return {c.real(), (c * t).real(), (c * t * t).real()};
}

double real_part_norm(std::complex<double> c, const TorusModulus& g) {
    const auto T = real_part_tensor(c, g);
    const auto gi = g.inverse_metric();
    // |T|_g^2 = tr(G^{-1} T G^{-1} T)
    const double A[2][2] = {{gi[0] * T[0] + gi[1] * T[1], gi[0] * T[1] + gi[1] * T[2]},
                            {gi[1] * T[0] + gi[2] * T[1], gi[1] * T[1] + gi[2] * T[2]}};
    const double tr = A[0][0] * A[0][0] + 2.0 * A[0][1] * A[1][0] + A[1][1] * A[1][1];
    return std::sqrt(std::max(0.0, tr));
}

MetricVelocity metric_velocity(const SphereMapField& u, const TorusModulus& g, double eta) {
    const auto S = pullback_means(u);
    MetricVelocity mv;
    mv.c = 4.0 * hopf_from_pullback(S[0], S[1], S[2], g);
    const double k = 0.25 * eta * eta * g.b * g.b;
    mv.da = -k * mv.c.imag();
    mv.db = -k * mv.c.real();
    mv.projection_l2 = quadratic_differential_norm(mv.c, g);
    mv.speed = 0.25 * eta * eta * real_part_norm(mv.c, g);
    return mv;
}

double injectivity_radius(const TorusModulus& g) {
    if (!(g.b > 0.0)) throw DomainError("modulus requires b > 0");
    std::complex<double> v1{1.0, 0.0}, v2 = g.tau();
    for (int it = 0; it < 200; ++it) {
        if (std::norm(v2) < std::norm(v1)) std::swap(v1, v2);
        const double mu = std::round((v2 * std::conj(v1)).real() / std::norm(v1));
        if (mu == 0.0) break;
        v2 -= mu * v1;
    }
    const double shortest = std::sqrt(std::min(std::norm(v1), std::norm(v2)));
    return 0.5 * shortest / std::sqrt(g.b);
}

Diagnostics diagnose(const FlowState& s, double eta) {
    Diagnostics d;
    d.E = energy(s.u, s.g);
    d.tension_l2 = l2_norm(tension_field(s.u, s.g));
    const auto mv = metric_velocity(s.u, s.g, eta);
    d.projection_l2 = mv.projection_l2;
    d.speed = mv.speed;
    d.inj = injectivity_radius(s.g);
    return d;
}

double cfl_limit(const TorusModulus& g, std::size_t N, double cfl_factor) {
    const double h = 1.0 / static_cast<double>(N);
    return cfl_factor * h * h * g.min_eigenvalue();
}

StepOutcome step(const FlowState& s, double dt, const FlowConfig& cfg) {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    const double limit = cfl_limit(s.g, s.u.rows, cfg.cfl_factor);
    if (dt > limit * (1.0 + 1e-12)) throw DomainError("time step violates the CFL condition");
    const std::size_t d = s.u.dim;

    const SphereMapField t1 = tension_field(s.u, s.g);
    const MetricVelocity m1 = metric_velocity(s.u, s.g, cfg.eta);
    FlowState mid;
    mid.t = s.t + 0.5 * dt;
    mid.u = s.u;
    for (std::size_t p = 0; p < s.u.data.size(); ++p) mid.u.data[p] += 0.5 * dt * t1.data[p];
    mid.u.normalize();
    mid.g = {s.g.a + 0.5 * dt * m1.da, s.g.b + 0.5 * dt * m1.db};
    if (!(mid.g.b > 0.0)) throw NumericalAbort("modulus left the upper half plane");

    const SphereMapField t2 = tension_field(mid.u, mid.g);
    const MetricVelocity m2 = metric_velocity(mid.u, mid.g, cfg.eta);
    StepOutcome out;
    out.state.t = s.t + dt;
    out.state.u = s.u;
    for (std::size_t p = 0; p < s.u.data.size(); ++p) out.state.u.data[p] += dt * t2.data[p];
    out.state.u.normalize();
    out.state.g = {s.g.a + dt * m2.da, s.g.b + dt * m2.db};
    out.arc = dt * m2.speed;
    (void)d;
    if (!out.state.u.all_finite() || !std::isfinite(out.state.g.a) || !(out.state.g.b > 0.0))
        throw NumericalAbort("non-finite state after torus step");
    return out;
}

double energy_identity_residual(const FlowHistory& h, double eta, double floor) {
    const auto& s = h.samples;
    if (s.size() < 3) throw DomainError("energy identity needs at least 3 samples");
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < s.size(); ++k) {
        const double h1 = s[k].t - s[k - 1].t, h2 = s[k + 1].t - s[k].t;
        if (!(h1 > 0.0) || !(h2 > 0.0)) throw DomainError("sample times must be strictly increasing");
        const double dEdt = -h2 / (h1 * (h1 + h2)) * s[k - 1].E + (h2 - h1) / (h1 * h2) * s[k].E +
                            h1 / (h2 * (h1 + h2)) * s[k + 1].E;
        const double rhs =
            -(s[k].tension_l2 * s[k].tension_l2) - eta * eta / 32.0 * s[k].projection_l2 * s[k].projection_l2;
        worst = std::max(worst, std::abs(dEdt - rhs) / (std::abs(dEdt) + floor));
    }
    return worst;
}

HorizontalReport horizontal_diagnostics(const FlowHistory& h, double eta, double rel_tol) {
    const auto& s = h.samples;
    if (s.empty()) throw DomainError("horizontal diagnostics need a nonempty history");
    const std::size_t n = s.size();
    HorizontalReport r;
    r.L.assign(n, 0.0);
    r.rhs.assign(n, 0.0);
    const bool have_arc = std::all_of(s.begin(), s.end(), [](const HistorySample& x) { return std::isfinite(x.arc_length); });
    if (have_arc) {
        for (std::size_t k = 0; k < n; ++k) r.L[k] = std::max(0.0, s[n - 1].arc_length - s[k].arc_length);
    } else {
        for (std::size_t k = n - 1; k-- > 0;)
            r.L[k] = r.L[k + 1] + 0.5 * (s[k + 1].t - s[k].t) * (s[k].speed_l2 + s[k + 1].speed_l2);
    }
    const double T = s[n - 1].t, ET = s[n - 1].E;
    double E_scale = 0.0;
    for (const auto& x : s) E_scale = std::max(E_scale, std::abs(x.E));
    const double L_scale = r.L[0];
    constexpr double eps = std::numeric_limits<double>::epsilon();
    r.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        r.rhs[k] = eta * eta * (T - s[k].t) * (s[k].E - ET);
        const double margin = r.rhs[k] - r.L[k] * r.L[k];
        r.min_margin = std::min(r.min_margin, margin);
        // floating-point floor: rounding in E(t) - E(T) and in the arc-length difference
        const double floor = 64.0 * eps * (eta * eta * (T - s[k].t) * E_scale + 2.0 * r.L[k] * L_scale);
        if (margin < -(rel_tol * std::abs(r.rhs[k]) + floor)) r.bound_holds = false;
    }
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dt = s[k + 1].t - s[k].t;
        if (!(dt > 0.0)) continue;
        const double rate = std::abs(std::sqrt(s[k + 1].inj) - std::sqrt(s[k].inj)) / dt;
        const double speed = 0.5 * (s[k].speed_l2 + s[k + 1].speed_l2);
        if (speed > 0.0) r.K0 = std::max(r.K0, rate / speed);
    }
    return r;
}

SphereMapField make_constant_map(std::size_t N, int target_dim) {
    if (target_dim < 1) throw DomainError("target dimension must be >= 1");
    SphereMapField u(N, N, static_cast<std::size_t>(target_dim) + 1);
    for (std::size_t p = 0; p < u.nodes(); ++p) u.data[p * u.dim + u.dim - 1] = 1.0;
    return u;
}

SphereMapField make_wrap_map(std::size_t N, int target_dim) {
    if (target_dim < 1) throw DomainError("target dimension must be >= 1");
    SphereMapField u(N, N, static_cast<std::size_t>(target_dim) + 1);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double x = static_cast<double>(j) / static_cast<double>(N);
            double* v = u.node(i, j);
            v[0] = std::cos(kTwoPi * x);
            v[1] = std::sin(kTwoPi * x);
        }
    return u;
}

SphereMapField make_wrap_perturbed(std::size_t N, int target_dim, double amplitude, std::uint64_t seed) {
    if (target_dim < 2) throw DomainError("perturbed wrap needs a target of dimension >= 2");
    SphereMapField u = make_wrap_map(N, target_dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coef(-1.0, 1.0), phase(0.0, kTwoPi);
    struct Mode {
        int m, n;
        double amp, ph;
    };
    std::vector<Mode> modes;
    for (int m = 0; m <= 2; ++m)
        for (int n = 0; n <= 2; ++n) {
            const double amp = coef(rng);
            const double ph = phase(rng);
            modes.push_back({m, n, amp, ph});
        }
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double x = static_cast<double>(j) / static_cast<double>(N);
            const double y = static_cast<double>(i) / static_cast<double>(N);
            double p = 1.0;
            for (const auto& md : modes) p += 0.5 * md.amp * std::cos(kTwoPi * (md.m * x + md.n * y) + md.ph);
            u.node(i, j)[2] += amplitude * p;
        }
    u.normalize();
    return u;
}

TorusRunResult run_torus(const FlowState& initial, const FlowConfig& cfg) {
    if (initial.u.rows != cfg.N) throw DomainError("initial field size does not match the configured grid");
    TorusRunResult res;
    FlowState s = initial;
    s.u.normalize();
    double arc = 0.0;
    auto record = [&](const FlowState& st) {
        const Diagnostics d = diagnose(st, cfg.eta);
        res.history.samples.push_back(
            {st.t, d.E, d.tension_l2, d.projection_l2, st.g.a, st.g.b, d.inj, d.speed, arc});
    };
    record(s);
    res.snapshots.push_back(s);
    res.max_norm_defect = s.u.max_norm_defect();
    res.max_det_defect = std::abs(s.g.det() - 1.0);
    double E_prev = res.history.samples.back().E;
    std::size_t steps = 0;
    res.status = "timeout";
    const double t_end = cfg.max_time;
    while (s.t < t_end * (1.0 - 1e-14)) {
        if (injectivity_radius(s.g) < cfg.inj_floor) {
            res.status = "degenerate";
            break;
        }
        double dt = cfl_limit(s.g, cfg.N, cfg.cfl_factor);
        if (cfg.dt > 0.0) dt = std::min(dt, cfg.dt);
        dt = std::min(dt, t_end - s.t);
        StepOutcome o = step(s, dt, cfg);
        s = std::move(o.state);
        arc += o.arc;
        ++steps;
        res.max_norm_defect = std::max(res.max_norm_defect, s.u.max_norm_defect());
        res.max_det_defect = std::max(res.max_det_defect, std::abs(s.g.det() - 1.0));
        const double E_now = energy(s.u, s.g);
        res.max_energy_increase = std::max(res.max_energy_increase, E_now - E_prev);
        E_prev = E_now;
        const bool last = !(s.t < t_end * (1.0 - 1e-14));
        if (cfg.sample_every > 0 && (steps % cfg.sample_every == 0 || last)) record(s);
        if (cfg.snapshot_every > 0 && steps % cfg.snapshot_every == 0 && !last) res.snapshots.push_back(s);
    }
    if (res.history.samples.back().t != s.t) record(s);
    if (injectivity_radius(s.g) < cfg.inj_floor) res.status = "degenerate";
    res.snapshots.push_back(s);
    res.final_state = s;
    return res;
}

}  // namespace tmflow
