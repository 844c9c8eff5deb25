#include "tmflow/ricci.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "tmflow/error.hpp"

namespace tmflow {

namespace {

constexpr double kPi = std::numbers::pi;
using Vec3 = std::array<double, 3>;

Vec3 sph(double th, double ph) { return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)}; }

Vec3 mat_vec(const std::array<double, 9>& R, const Vec3& x) {
    return {R[0] * x[0] + R[1] * x[1] + R[2] * x[2], R[3] * x[0] + R[4] * x[1] + R[5] * x[2],
            R[6] * x[0] + R[7] * x[1] + R[8] * x[2]};
}

Vec3 mat_t_vec(const std::array<double, 9>& R, const Vec3& x) {
    return {R[0] * x[0] + R[3] * x[1] + R[6] * x[2], R[1] * x[0] + R[4] * x[1] + R[7] * x[2],
            R[2] * x[0] + R[5] * x[1] + R[8] * x[2]};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(Vec3 a) {
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    return {a[0] / n, a[1] / n, a[2] / n};
}

// Point at geodesic distance r from x in the unit tangent direction e.
Vec3 exp_map(const Vec3& x, const Vec3& e, double r) {
    const double c = std::cos(r), s = std::sin(r);
    return {c * x[0] + s * e[0], c * x[1] + s * e[1], c * x[2] + s * e[2]};
}

std::pair<Vec3, Vec3> tangent_frame(const Vec3& x) {
    const Vec3 ref = std::abs(x[2]) < 0.9 ? Vec3{0.0, 0.0, 1.0} : Vec3{1.0, 0.0, 0.0};
    const Vec3 e1 = normalized(cross(x, ref));
    return {e1, cross(x, e1)};
}

// 5-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 5> kGLx = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                        0.9061798459386640};
constexpr std::array<double, 5> kGLw = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                        0.4786286704993665, 0.2369268850561891};

using Integrand = std::function<double(double, double)>;

constexpr double kQuadTol = 1e-10;

double gl_rect(const Integrand& f, double t0, double t1, double p0, double p1) {
    const double tm = 0.5 * (t0 + t1), tr = 0.5 * (t1 - t0), pm = 0.5 * (p0 + p1), pr = 0.5 * (p1 - p0);
    double s = 0.0;
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) s += kGLw[a] * kGLw[b] * f(tm + tr * kGLx[a], pm + pr * kGLx[b]);
    return s * tr * pr;
}

double adaptive_rect(const Integrand& f, double t0, double t1, double p0, double p1, double whole, double tol,
                     int depth) {
    const double tm = 0.5 * (t0 + t1), pm = 0.5 * (p0 + p1);
    const double q[4] = {gl_rect(f, t0, tm, p0, pm), gl_rect(f, tm, t1, p0, pm), gl_rect(f, t0, tm, pm, p1),
                         gl_rect(f, tm, t1, pm, p1)};
    const double sum = q[0] + q[1] + q[2] + q[3];
    if (depth >= 24 || std::abs(sum - whole) <= tol) return sum;
    const double t = 0.5 * tol;
    return adaptive_rect(f, t0, tm, p0, pm, q[0], t, depth + 1) + adaptive_rect(f, tm, t1, p0, pm, q[1], t, depth + 1) +
           adaptive_rect(f, t0, tm, pm, p1, q[2], t, depth + 1) + adaptive_rect(f, tm, t1, pm, p1, q[3], t, depth + 1);
}

double integrate_rect(const Integrand& f, double t0, double t1, double p0, double p1, double tol) {
    if (!(t1 > t0) || !(p1 > p0)) return 0.0;
    return adaptive_rect(f, t0, t1, p0, p1, gl_rect(f, t0, t1, p0, p1), tol, 0);
}

// Finite-volume Laplacian of a cell field on the latitude-longitude grid.
struct LatLonOps {
    std::size_t nt, np;
    double dt, dp;
    std::vector<double> area, edge_flux, phi_coef;  // per row; edge_flux per edge (nt + 1)

    explicit LatLonOps(const SphereConformalMetric& m)
        : nt(m.ntheta), np(m.nphi), dt(m.dtheta()), dp(m.dphi()), area(nt), edge_flux(nt + 1, 0.0), phi_coef(nt) {
        for (std::size_t i = 0; i < nt; ++i) {
            area[i] = m.cell_area(i);
            phi_coef[i] = dt / (std::sin(m.theta_center(i)) * dp) / area[i];
        }
        for (std::size_t e = 1; e < nt; ++e) edge_flux[e] = std::sin(dt * static_cast<double>(e)) * dp / dt;
    }

    void theta_part(const std::vector<double>& f, std::vector<double>& out) const {
        for (std::size_t i = 0; i < nt; ++i)
            for (std::size_t j = 0; j < np; ++j) {
                double s = 0.0;
                if (i + 1 < nt) s += edge_flux[i + 1] * (f[(i + 1) * np + j] - f[i * np + j]);
                if (i > 0) s -= edge_flux[i] * (f[i * np + j] - f[(i - 1) * np + j]);
                out[i * np + j] = s / area[i];
            }
    }

    void phi_part(const std::vector<double>& f, std::vector<double>& out, bool accumulate) const {
        for (std::size_t i = 0; i < nt; ++i)
            for (std::size_t j = 0; j < np; ++j) {
                const std::size_t jp = j + 1 == np ? 0 : j + 1, jm = j == 0 ? np - 1 : j - 1;
                const double v = phi_coef[i] * (f[i * np + jp] - 2.0 * f[i * np + j] + f[i * np + jm]);
                out[i * np + j] = accumulate ? out[i * np + j] + v : v;
            }
    }
};

void ring_mean(std::vector<double>& f, std::size_t row, std::size_t np) {
    double s = 0.0;
    for (std::size_t j = 0; j < np; ++j) s += f[row * np + j];
    s /= static_cast<double>(np);
    for (std::size_t j = 0; j < np; ++j) f[row * np + j] = s;
}

// Solves the cyclic system (d_j) y_j - c (y_{j-1} + y_{j+1}) = r_j in place of r.
void cyclic_solve(const double* d, double c, double* r, std::size_t n, std::vector<double>& w1,
                  std::vector<double>& w2, std::vector<double>& bb) {
    const double gamma = -d[0];
    bb.assign(d, d + n);
    bb[0] = d[0] - gamma;
    bb[n - 1] = d[n - 1] - c * c / gamma;
    auto thomas = [&](double* x) {
        w1[0] = -c / bb[0];
        x[0] /= bb[0];
        for (std::size_t j = 1; j < n; ++j) {
            const double m = bb[j] + c * w1[j - 1];
            w1[j] = -c / m;
            x[j] = (x[j] + c * x[j - 1]) / m;
        }
        for (std::size_t j = n - 1; j-- > 0;) x[j] -= w1[j] * x[j + 1];
    };
    thomas(r);
    w2.assign(n, 0.0);
    w2[0] = gamma;
    w2[n - 1] = -c;
    std::vector<double> z = w2;
    thomas(z.data());
    const double vn = -c / gamma;
    const double fact = (r[0] + vn * r[n - 1]) / (1.0 + z[0] + vn * z[n - 1]);
    for (std::size_t j = 0; j < n; ++j) r[j] -= fact * z[j];
}

}  // namespace

double SphereConformalMetric::dtheta() const { return kPi / static_cast<double>(ntheta); }
double SphereConformalMetric::dphi() const { return 2.0 * kPi / static_cast<double>(nphi); }
double SphereConformalMetric::theta_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * dtheta(); }
double SphereConformalMetric::cell_area(std::size_t i) const {
    const double d = dtheta();
    return (std::cos(d * static_cast<double>(i)) - std::cos(d * static_cast<double>(i + 1))) * dphi();
}
double SphereConformalMetric::v(std::size_t i, std::size_t j) const { return 0.5 * std::log(u[i * nphi + j]); }

std::complex<double> elliptic_k(std::complex<double> m) {
    std::complex<double> a{1.0, 0.0}, b = std::sqrt(1.0 - m);
    for (int it = 0; it < 60; ++it) {
        const std::complex<double> an = 0.5 * (a + b);
        std::complex<double> bn = std::sqrt(a * b);
        if (std::abs(an - bn) > std::abs(an + bn)) bn = -bn;
        a = an;
        b = bn;
        if (std::abs(a - b) <= 4e-16 * std::abs(a)) break;
    }
    return kPi / (2.0 * a);
}

double thrice_punctured_density(std::complex<double> z) {
    const double re = (elliptic_k(z) * std::conj(elliptic_k(1.0 - z))).real();
    return kPi / (4.0 * std::abs(z) * std::abs(1.0 - z) * re);
}

double hyperbolic_factor_model(int n, const std::array<double, 3>& y_in) {
    if (n < 3) throw DomainError("a hyperbolic punctured sphere needs at least 3 punctures");
    Vec3 y = y_in;
    if (y[2] > 0.0) {
        y[1] = -y[1];
        y[2] = -y[2];
    }
    const std::complex<double> w{y[0] / (1.0 - y[2]), y[1] / (1.0 - y[2])};
    const double aw = std::abs(w);
    const std::complex<double> z = std::pow(w, n - 2);
    const double rho = thrice_punctured_density(z) * (n - 2) * std::pow(aw, n - 3);
    return std::log(rho) + std::log1p(aw * aw) - std::log(2.0);
}

std::array<double, 9> puncture_rotation() {
    auto mul = [](const std::array<double, 9>& A, const std::array<double, 9>& B) {
        std::array<double, 9> C{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) C[3 * i + j] += A[3 * i + k] * B[3 * k + j];
        return C;
    };
    auto rz = [](double g) {
        return std::array<double, 9>{std::cos(g), -std::sin(g), 0.0, std::sin(g), std::cos(g), 0.0, 0.0, 0.0, 1.0};
    };
    const double b = kPi / 2 + 0.21;
    const std::array<double, 9> rx = {1.0, 0.0, 0.0, 0.0, std::cos(b), -std::sin(b), 0.0, std::sin(b), std::cos(b)};
    return mul(mul(rz(0.37), rx), rz(0.29));
}

SphereConformalMetric round_metric(std::size_t ntheta, std::size_t nphi, double c) {
    if (ntheta < 8 || nphi < 8) throw DomainError("sphere grid needs at least 8 cells per direction");
    SphereConformalMetric m;
    m.ntheta = ntheta;
    m.nphi = nphi;
    m.u.assign(ntheta * nphi, std::exp(2.0 * c));
    return m;
}

CuspedInitial build_cusped_initial(int n, double cap, std::size_t ntheta, std::size_t nphi) {
    if (n < 3) throw DomainError("a hyperbolic punctured sphere needs at least 3 punctures");
    if (!(cap >= 20.0) || !std::isfinite(cap)) throw DomainError("cap height must be finite and at least 20");
    CuspedInitial out;
    out.n = n;
    SphereConformalMetric& m = out.metric = round_metric(ntheta, nphi);
    m.cap = cap;
    const auto R = puncture_rotation();
    const double dt = m.dtheta(), dp = m.dphi();

    std::vector<Vec3> model = {{0.0, 0.0, -1.0}, {0.0, 0.0, 1.0}};
    for (int k = 0; k < n - 2; ++k) {
        const double a = 2.0 * kPi * k / (n - 2);
        model.push_back({std::cos(a), std::sin(a), 0.0});
    }
    struct Cell {
        std::size_t i, j;
        double th, ph;
    };
    std::vector<Cell> pcells;
    for (const auto& p : model) {
        const Vec3 x = mat_vec(R, p);
        m.punctures.push_back(x);
        const double th = std::acos(std::clamp(x[2], -1.0, 1.0));
        double ph = std::atan2(x[1], x[0]);
        if (ph < 0.0) ph += 2.0 * kPi;
        const auto i = std::min(static_cast<std::size_t>(th / dt), ntheta - 1);
        const auto j = std::min(static_cast<std::size_t>(ph / dp), nphi - 1);
        if (i < 3 || i + 4 > ntheta) throw DomainError("puncture too close to a grid pole");
        pcells.push_back({i, j, th, ph});
    }
    auto cell_dist = [&](std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1) {
        const std::size_t di = i0 > i1 ? i0 - i1 : i1 - i0;
        std::size_t dj = j0 > j1 ? j0 - j1 : j1 - j0;
        dj = std::min(dj, nphi - dj);
        return std::max(di, dj);
    };
    for (std::size_t a = 0; a < pcells.size(); ++a)
        for (std::size_t b = a + 1; b < pcells.size(); ++b)
            if (cell_dist(pcells[a].i, pcells[a].j, pcells[b].i, pcells[b].j) < 4)
                throw DomainError("punctures closer than 4 grid cells");

    auto factor_at = [&](const Vec3& x) { return hyperbolic_factor_model(n, mat_t_vec(R, x)); };
    const double ucap = std::exp(2.0 * cap);
    const Integrand dens = [&](double th, double ph) {
        return std::min(std::exp(2.0 * factor_at(sph(th, ph))), ucap) * std::sin(th);
    };

    for (std::size_t i = 0; i < ntheta; ++i)
        for (std::size_t j = 0; j < nphi; ++j)
            m.u[i * nphi + j] = std::exp(2.0 * factor_at(sph(m.theta_center(i), (static_cast<double>(j) + 0.5) * dp)));

    double beta_sum = 0.0;
    for (std::size_t k = 0; k < pcells.size(); ++k) {
        const auto& pc = pcells[k];
        const Vec3& p = m.punctures[k];
        // cusp constant: e^{v} ~ 1 / (r (log(1/r) + beta)) as r -> 0
        const Vec3 e1 = {std::cos(pc.th) * std::cos(pc.ph), std::cos(pc.th) * std::sin(pc.ph), -std::sin(pc.th)};
        const Vec3 e2 = {-std::sin(pc.ph), std::cos(pc.ph), 0.0};
        const double r1 = 1e-5;
        double beta = 0.0;
        for (int q = 0; q < 16; ++q) {
            const double psi = 2.0 * kPi * q / 16.0;
            const Vec3 dir = {std::cos(psi) * e1[0] + std::sin(psi) * e2[0], std::cos(psi) * e1[1] + std::sin(psi) * e2[1],
                              std::cos(psi) * e1[2] + std::sin(psi) * e2[2]};
            beta += 1.0 / (r1 * std::exp(factor_at(exp_map(p, dir, r1)))) - std::log(1.0 / r1);
        }
        beta /= 16.0;
        beta_sum += beta;
        double ell = cap;
        for (int it = 0; it < 100; ++it) ell = cap + std::log(ell + beta);
        const double Lc = ell + beta;
        const double cusp_deficit = 2.0 * kPi * (1.0 / Lc - 1.0 / (2.0 * Lc * Lc));
        out.deficit_analytic += cusp_deficit;

        for (long di = -2; di <= 2; ++di)
            for (long dj = -2; dj <= 2; ++dj) {
                const std::size_t i = static_cast<std::size_t>(static_cast<long>(pc.i) + di);
                const std::size_t j = static_cast<std::size_t>(
                    (static_cast<long>(pc.j) + dj + static_cast<long>(nphi)) % static_cast<long>(nphi));
                const double t0 = dt * static_cast<double>(i), t1 = t0 + dt;
                const double p0 = dp * static_cast<double>(j), p1 = p0 + dp;
                double mass;
                if (di != 0 || dj != 0) {
                    mass = integrate_rect(dens, t0, t1, p0, p1, kQuadTol);
                } else {
                    const double st = std::sin(pc.th);
                    double a = 1e-4;
                    a = std::min({a, 0.45 * (pc.th - t0), 0.45 * (t1 - pc.th), 0.45 * (pc.ph - p0) * st,
                                  0.45 * (p1 - pc.ph) * st});
                    if (a < 1e-6) throw DomainError("puncture lies on a grid cell edge");
                    const double at = a, ap = a / st;
                    const double tb[4] = {t0, pc.th - at, pc.th + at, t1};
                    const double pb[4] = {p0, pc.ph - ap, pc.ph + ap, p1};
                    mass = 0.0;
                    for (int x = 0; x < 3; ++x)
                        for (int y = 0; y < 3; ++y)
                            if (x != 1 || y != 1) mass += integrate_rect(dens, tb[x], tb[x + 1], pb[y], pb[y + 1], kQuadTol);
                    // square of half-size a around the cusp, with the capped core removed
                    auto G = [&](double r) { return 1.0 / (std::log(1.0 / r) + beta); };
                    const Integrand radial = [&](double psi, double) { return G(a / std::cos(psi)); };
                    mass += 8.0 * integrate_rect(radial, 0.0, kPi / 4.0, 0.0, 1.0, kQuadTol) - cusp_deficit;
                }
                m.u[i * nphi + j] = mass / m.cell_area(i);
            }
    }
    out.beta_mean = beta_sum / static_cast<double>(pcells.size());
    out.area = sphere_area(m);
    out.exact_area = 2.0 * kPi * (n - 2);
    out.deficit_measured = out.exact_area - out.area;

    // curvature of the continuous factor at cell centres away from the caps
    const double h = 2e-4;
    for (std::size_t i = 0; i < ntheta; ++i)
        for (std::size_t j = 0; j < nphi; ++j) {
            bool near = false;
            for (const auto& pc : pcells)
                if (cell_dist(i, j, pc.i, pc.j) <= 3) near = true;
            if (near) continue;
            const Vec3 x = sph(m.theta_center(i), (static_cast<double>(j) + 0.5) * dp);
            const auto [e1, e2] = tangent_frame(x);
            const double v0 = factor_at(x);
            const double lap = (factor_at(exp_map(x, e1, h)) + factor_at(exp_map(x, e1, -h)) +
                                factor_at(exp_map(x, e2, h)) + factor_at(exp_map(x, e2, -h)) - 4.0 * v0) /
                               (h * h);
            const double K = std::exp(-2.0 * v0) * (1.0 - lap);
            out.curvature_residual = std::max(out.curvature_residual, std::abs(K + 1.0));
        }
    return out;
}

double sphere_area(const SphereConformalMetric& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.ntheta; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < m.nphi; ++j) row += m.u[i * m.nphi + j];
        s += row * m.cell_area(i);
    }
    return s;
}

std::vector<double> gauss_curvature(const SphereConformalMetric& m) {
    const LatLonOps ops(m);
    const std::size_t N = m.u.size();
    std::vector<double> lu(N), L(N);
    for (std::size_t p = 0; p < N; ++p) lu[p] = std::log(m.u[p]);
    ops.theta_part(lu, L);
    ops.phi_part(lu, L, true);
    ring_mean(L, 0, m.nphi);
    ring_mean(L, m.ntheta - 1, m.nphi);
    for (std::size_t p = 0; p < N; ++p) L[p] = (1.0 - 0.5 * L[p]) / m.u[p];
    return L;
}

double ricci_cfl_limit(const SphereConformalMetric& m, double cfl) {
    const double umin = *std::min_element(m.u.begin(), m.u.end());
    return cfl * m.dtheta() * m.dtheta() * umin;
}

void ricci_step(SphereConformalMetric& m, double dt) {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    if (dt > ricci_cfl_limit(m) * (1.0 + 1e-12)) throw DomainError("time step violates the CFL limit");
    const LatLonOps ops(m);
    const std::size_t N = m.u.size(), np = m.nphi;
    std::vector<double> lu(N), rhs(N);
    for (std::size_t p = 0; p < N; ++p) lu[p] = std::log(m.u[p]);
    ops.theta_part(lu, rhs);
    ops.phi_part(lu, rhs, true);
    std::vector<double> d(np), w1(np), w2(np), bb(np);
    for (std::size_t i = 0; i < m.ntheta; ++i) {
        const double c = dt * ops.phi_coef[i];
        double* r = rhs.data() + i * np;
        for (std::size_t j = 0; j < np; ++j) {
            d[j] = m.u[i * np + j] + 2.0 * c;
            r[j] = dt * (r[j] - 2.0);
        }
        cyclic_solve(d.data(), c, r, np, w1, w2, bb);
        for (std::size_t j = 0; j < np; ++j) {
            if (!(1.0 + r[j] > 0.0)) throw NumericalAbort("conformal factor left the positive range");
            m.u[i * np + j] *= 1.0 + r[j];
        }
    }
    ring_mean(m.u, 0, np);
    ring_mean(m.u, m.ntheta - 1, np);
    for (double x : m.u)
        if (!std::isfinite(x)) throw NumericalAbort("non-finite conformal factor");
}

RicciRun run_ricci(SphereConformalMetric m, const RicciConfig& cfg) {
    if (!(cfg.cfl > 0.0) || cfg.cfl > 0.5) throw DomainError("cfl must lie in (0, 0.5]");
    if (cfg.sample_every == 0) throw DomainError("sample_every must be positive");
    RicciRun run;
    ring_mean(m.u, 0, m.nphi);
    ring_mean(m.u, m.ntheta - 1, m.nphi);
    const double A0 = sphere_area(m);
    run.T_pred = A0 / (8.0 * kPi);
    double t = 0.0, prev_min = -std::numeric_limits<double>::infinity();
    for (std::size_t step = 0;; ++step) {
        const auto K = gauss_curvature(m);
        RicciSample s;
        s.t = t;
        s.area = sphere_area(m);
        s.min_K = *std::min_element(K.begin(), K.end());
        s.max_K = *std::max_element(K.begin(), K.end());
        const double scale = 2.0 * (run.T_pred - t);
        for (std::size_t i = 0; i < m.ntheta; ++i)
            for (std::size_t j = 0; j < m.nphi; ++j) {
                const std::size_t p = i * m.nphi + j;
                s.deviation = std::max(s.deviation, std::abs(scale * K[p] - 1.0));
                s.total_curvature += K[p] * m.u[p] * m.cell_area(i);
            }
        run.gauss_bonnet_max_error =
            std::max(run.gauss_bonnet_max_error, std::abs(s.total_curvature - 4.0 * kPi) / (4.0 * kPi));
        run.min_K_violation = std::max(run.min_K_violation, prev_min - s.min_K);
        prev_min = s.min_K;

        const double umin = *std::min_element(m.u.begin(), m.u.end());
        std::string stop;
        if (s.max_K > cfg.curvature_blowup || umin < cfg.u_floor) stop = "near-extinction";
        else if (t >= cfg.max_time) stop = "time-limit";
        else if (step >= cfg.max_steps) stop = "step-limit";
        if (!stop.empty() || step % cfg.sample_every == 0) run.samples.push_back(s);
        if (!stop.empty()) {
            run.status = stop;
            run.steps = step;
            break;
        }
        const double dt = std::min(ricci_cfl_limit(m, cfg.cfl), cfg.max_time - t);
        ricci_step(m, dt);
        t += dt;
    }
    run.final_metric = std::move(m);
    return run;
}

RicciRunReport extinction_report(const RicciRun& run, int n) {
    if (n < 3) throw DomainError("a hyperbolic punctured sphere needs at least 3 punctures");
    const auto& s = run.samples;
    if (s.size() < 10) throw DomainError("run too short for an extinction fit (fewer than 10 samples)");
    RicciRunReport r;
    r.n = n;
    r.samples = s.size();
    r.area0 = s.front().area;
    r.T_pred = r.area0 / (8.0 * kPi);
    r.T_ref = (n - 2) / 4.0;
    r.deficit = 2.0 * kPi * (n - 2) - r.area0;
    r.deficit_rel = r.deficit / (2.0 * kPi * (n - 2));

    const double t_smooth = 0.1 * r.T_pred;
    double st = 0, sa = 0, stt = 0, sta = 0, cnt = 0;
    for (const auto& x : s) {
        if (x.t < t_smooth) continue;
        st += x.t;
        sa += x.area;
        stt += x.t * x.t;
        sta += x.t * x.area;
        cnt += 1;
    }
    if (cnt < 3) {
        st = sa = stt = sta = cnt = 0;
        for (const auto& x : s) {
            st += x.t;
            sa += x.area;
            stt += x.t * x.t;
            sta += x.t * x.area;
            cnt += 1;
        }
    }
    r.slope = (cnt * sta - st * sa) / (cnt * stt - st * st);
    r.slope_rel_error = std::abs(r.slope + 8.0 * kPi) / (8.0 * kPi);
    for (std::size_t k = 1; k < s.size(); ++k)
        if (!(s[k].area < s[k - 1].area)) r.area_strictly_decreasing = false;
    r.deviation_last = s.back().deviation;
    const double t_q = 0.75 * s.back().t;
    for (std::size_t k = 1; k < s.size(); ++k)
        if (s[k - 1].t >= t_q)
            r.last_quartile_max_increase = std::max(r.last_quartile_max_increase, s[k].deviation - s[k - 1].deviation);
    return r;
}

}  // namespace tmflow
