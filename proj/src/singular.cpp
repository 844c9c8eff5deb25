#include "tmflow/singular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "tmflow/error.hpp"

namespace tmflow {

namespace {

using Interval = std::pair<std::size_t, std::size_t>;  // inclusive

// Index ranges covered by [c - k, c + k] on an axis of length n.
std::vector<Interval> axis_ranges(std::size_t c, std::size_t k, std::size_t n, bool periodic, bool* clipped) {
    if (clipped) *clipped = false;
    if (periodic) {
        if (2 * k + 1 >= n) return {{0, n - 1}};
        const long lo = static_cast<long>(c) - static_cast<long>(k);
        const long hi = static_cast<long>(c) + static_cast<long>(k);
        const long N = static_cast<long>(n);
        if (lo < 0) return {{0, static_cast<std::size_t>(hi)}, {static_cast<std::size_t>(lo + N), n - 1}};
        if (hi >= N) return {{static_cast<std::size_t>(lo), n - 1}, {0, static_cast<std::size_t>(hi - N)}};
        return {{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)}};
    }
    long lo = static_cast<long>(c) - static_cast<long>(k);
    long hi = static_cast<long>(c) + static_cast<long>(k);
    if (lo < 0 || hi >= static_cast<long>(n)) {
        if (clipped) *clipped = true;
        lo = std::max(lo, 0L);
        hi = std::min(hi, static_cast<long>(n) - 1);
    }
    return {{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)}};
}

// Ordered list of indices covered by [c - k, c + k].
std::vector<std::size_t> axis_indices(std::size_t c, std::size_t k, std::size_t n, bool periodic, bool* clipped) {
    std::vector<std::size_t> idx;
    if (periodic && 2 * k + 1 >= n) {
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0);
        if (clipped) *clipped = false;
        return idx;
    }
    const long N = static_cast<long>(n);
    bool clip = false;
    for (long o = -static_cast<long>(k); o <= static_cast<long>(k); ++o) {
        long i = static_cast<long>(c) + o;
        if (periodic) {
            i = ((i % N) + N) % N;
        } else if (i < 0 || i >= N) {
            clip = true;
            continue;
        }
        idx.push_back(static_cast<std::size_t>(i));
    }
    if (clipped) *clipped = clip;
    return idx;
}

struct PrefixSum {
    std::size_t rows, cols;
    std::vector<double> P;  // (rows+1) x (cols+1)

    PrefixSum(const std::vector<double>& v, std::size_t r, std::size_t c) : rows(r), cols(c), P((r + 1) * (c + 1), 0.0) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                P[(i + 1) * (c + 1) + j + 1] =
                    v[i * c + j] + P[i * (c + 1) + j + 1] + P[(i + 1) * (c + 1) + j] - P[i * (c + 1) + j];
    }
    double rect(const Interval& ri, const Interval& ci) const {
        const std::size_t C = cols + 1;
        return P[(ri.second + 1) * C + ci.second + 1] - P[ri.first * C + ci.second + 1] -
               P[(ri.second + 1) * C + ci.first] + P[ri.first * C + ci.first];
    }
    double window(std::size_t i, std::size_t j, std::size_t ki, std::size_t kj, bool periodic_rows) const {
        double s = 0.0;
        for (const auto& ri : axis_ranges(i, ki, rows, periodic_rows, nullptr))
            for (const auto& ci : axis_ranges(j, kj, cols, true, nullptr)) s += rect(ri, ci);
        return s;
    }
};

// Signed periodic offset from a to b on an axis of length n (in index units).
double periodic_offset(double a, double b, double n) {
    double d = b - a;
    d -= n * std::round(d / n);
    return d;
}

double node_distance(const GridGeometry& geo, std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1,
                     bool chebyshev) {
    const double dx = periodic_offset(static_cast<double>(j0), static_cast<double>(j1), static_cast<double>(geo.cols)) * geo.hx;
    double dyi = static_cast<double>(i1) - static_cast<double>(i0);
    if (geo.periodic_rows) dyi = periodic_offset(static_cast<double>(i0), static_cast<double>(i1), static_cast<double>(geo.rows));
    const double dy = dyi * geo.hy;
    return chebyshev ? std::max(std::abs(dx), std::abs(dy)) : std::hypot(dx, dy);
}

}  // namespace

GridGeometry torus_geometry(std::size_t N, const TorusModulus& g) {
    const auto gi = g.inverse_metric();
    GridGeometry geo;
    geo.rows = geo.cols = N;
    geo.hx = geo.hy = 1.0 / static_cast<double>(N);
    geo.periodic_rows = true;
    geo.gxx = gi[0];
    geo.gxy = gi[1];
    geo.gyy = gi[2];
    return geo;
}

GridGeometry cylinder_geometry(const CylinderDomain& dom) {
    GridGeometry geo;
    geo.rows = dom.ns;
    geo.cols = dom.ntheta;
    geo.hx = dom.htheta;
    geo.hy = dom.hs;
    geo.periodic_rows = false;
    geo.y0 = -dom.X;
    return geo;
}

std::vector<double> node_energies(const SphereMapField& u, const GridGeometry& geo) {
    if (u.rows != geo.rows || u.cols != geo.cols) throw DomainError("field does not match the grid geometry");
    const std::size_t R = geo.rows, C = geo.cols, d = u.dim;
    std::vector<double> fx(R * C, 0.0), fy(R * C, 0.0);
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            fx[i * C + j] = dist2(u.node(i, wrap_next(j, C)), u.node(i, j), d) / (geo.hx * geo.hx);
            if (geo.periodic_rows || i + 1 < R)
                fy[i * C + j] = dist2(u.node(wrap_next(i, R), j), u.node(i, j), d) / (geo.hy * geo.hy);
        }
    std::vector<double> e(R * C);
    const double dA = geo.area_element();
    for (std::size_t i = 0; i < R; ++i) {
        const bool end_row = !geo.periodic_rows && (i == 0 || i + 1 == R);
        const double w = end_row ? 0.5 : 1.0;
        const bool has_prev = geo.periodic_rows || i > 0;
        const bool has_next = geo.periodic_rows || i + 1 < R;
        for (std::size_t j = 0; j < C; ++j) {
            const double sxx = 0.5 * (fx[i * C + j] + fx[i * C + wrap_prev(j, C)]);
            double syy = 0.5 * fy[i * C + j];
            if (has_prev) syy += 0.5 * fy[wrap_prev(i, R) * C + j];
            double sxy = 0.0;
            if (geo.gxy != 0.0 && has_prev && has_next) {
                const double* xp = u.node(i, wrap_next(j, C));
                const double* xm = u.node(i, wrap_prev(j, C));
                const double* yp = u.node(wrap_next(i, R), j);
                const double* ym = u.node(wrap_prev(i, R), j);
                for (std::size_t k = 0; k < d; ++k) sxy += (xp[k] - xm[k]) * (yp[k] - ym[k]);
                sxy /= 4.0 * geo.hx * geo.hy;
            }
            e[i * C + j] = 0.5 * (geo.gxx * w * sxx + geo.gyy * syy + 2.0 * geo.gxy * sxy) * dA;
        }
    }
    return e;
}

double window_energy(const SphereMapField& u, double hx, double hy, const GridGeometry& c, bool periodic_cols) {
    const std::size_t R = u.rows, C = u.cols, d = u.dim;
    double ex = 0.0, ey = 0.0, exy = 0.0;
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            if (j + 1 < C || periodic_cols) ex += dist2(u.node(i, (j + 1) % C), u.node(i, j), d);
            if (i + 1 < R) ey += dist2(u.node(i + 1, j), u.node(i, j), d);
            if (c.gxy != 0.0 && i > 0 && i + 1 < R && ((j > 0 && j + 1 < C) || periodic_cols)) {
                const double* xp = u.node(i, (j + 1) % C);
                const double* xm = u.node(i, (j + C - 1) % C);
                const double* yp = u.node(i + 1, j);
                const double* ym = u.node(i - 1, j);
                for (std::size_t k = 0; k < d; ++k) exy += (xp[k] - xm[k]) * (yp[k] - ym[k]);
            }
        }
    return 0.5 * (c.gxx * ex * (hy / hx) + c.gyy * ey * (hx / hy) + 2.0 * c.gxy * exy * 0.25);
}

double cutoff_profile(double rho) {
    if (rho <= 0.5) return 1.0;
    if (rho >= 1.0) return 0.0;
    const double t = 2.0 * (rho - 0.5);
    return 1.0 - 3.0 * t * t + 2.0 * t * t * t;
}

double cutoff_profile_derivative(double rho) {
    if (rho <= 0.5 || rho >= 1.0) return 0.0;
    const double t = 2.0 * (rho - 0.5);
    return 2.0 * (-6.0 * t + 6.0 * t * t);
}

namespace {

double torus_distance2(double dx, double dy, const TorusModulus& g) {
    const auto G = g.metric();
    dx -= std::round(dx);
    dy -= std::round(dy);
    double best = std::numeric_limits<double>::infinity();
    for (int m = -1; m <= 1; ++m)
        for (int n = -1; n <= 1; ++n) {
            const double x = dx + m, y = dy + n;
            best = std::min(best, G[0] * x * x + 2.0 * G[1] * x * y + G[2] * y * y);
        }
    return best;
}

}  // namespace

std::vector<double> cutoff_weights(std::size_t N, const TorusModulus& g, const CutoffFunction& phi) {
    if (!(phi.r > 0.0)) throw DomainError("cutoff radius must be positive");
    std::vector<double> w(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double d2 = torus_distance2(static_cast<double>(j) / N - phi.cx, static_cast<double>(i) / N - phi.cy, g);
            w[i * N + j] = cutoff_profile(d2 / (phi.r * phi.r));
        }
    return w;
}

double cutoff_gradient_sup(std::size_t N, const TorusModulus& g, const CutoffFunction& phi) {
    double worst = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double d2 = torus_distance2(static_cast<double>(j) / N - phi.cx, static_cast<double>(i) / N - phi.cy, g);
            const double rho = d2 / (phi.r * phi.r);
            worst = std::max(worst, std::abs(cutoff_profile_derivative(rho)) * 2.0 * std::sqrt(d2) / (phi.r * phi.r));
        }
    return worst;
}

double cutoff_energy(const SphereMapField& u, const TorusModulus& g, const std::vector<double>& phi) {
    const auto e = energy_density(u, g);
    if (phi.size() != e.size()) throw DomainError("cutoff weights do not match the grid");
    double s = 0.0;
    for (std::size_t p = 0; p < e.size(); ++p) s += phi[p] * phi[p] * e[p];
    return s / static_cast<double>(e.size());
}

DriftReport cutoff_energy_drift(const std::vector<double>& t, const std::vector<double>& E,
                                const std::vector<double>& Ephi, double dphi_sup, double delta) {
    if (t.size() < 2 || E.size() != t.size() || Ephi.size() != t.size())
        throw DomainError("cut-off drift needs at least 2 matching samples");
    if (!(delta > 0.0)) throw DomainError("delta must be positive");
    DriftReport r;
    const double pref = 1.0 / std::sqrt(delta) + dphi_sup;
    for (std::size_t a = 0; a < t.size(); ++a)
        for (std::size_t b = a + 1; b < t.size(); ++b) {
            ++r.pairs;
            const double obs = std::abs(Ephi[b] - Ephi[a]);
            const double drop = E[a] - E[b];
            r.max_observed = std::max(r.max_observed, obs);
            const double excess = obs - std::max(drop, 0.0);
            if (excess <= 1e-14 * std::max(1.0, std::abs(E[a]))) continue;
            const double denom = pref * std::sqrt(t[b] - t[a]) * std::sqrt(std::max(drop, 0.0));
            if (denom > 0.0) {
                r.C = std::max(r.C, excess / denom);
            } else {
                r.finite = false;
                r.C = std::numeric_limits<double>::infinity();
            }
        }
    return r;
}

EpsRegularityResult eps_regularity_gate(const SphereMapField& u, const TorusModulus& g, double cx, double cy,
                                        double r, double eps0) {
    if (!(r > 0.0) || r > 1.0) throw DomainError("radius must lie in (0, 1]");
    const std::size_t N = u.rows, d = u.dim;
    const double h = 1.0 / static_cast<double>(N), dA = h * h;
    const auto e = energy_density(u, g);
    const auto phi = cutoff_weights(N, g, {cx, cy, r});
    const SphereMapField tau = tension_field(u, g);
    const auto gi = g.inverse_metric();
    EpsRegularityResult res;
    double tau_term = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t p = i * N + j;
            const double d2 = torus_distance2(static_cast<double>(j) * h - cx, static_cast<double>(i) * h - cy, g);
            if (d2 < r * r) res.local_energy += e[p] * dA;
            if (phi[p] == 0.0) continue;
            const std::size_t ip = wrap_next(i, N), im = wrap_prev(i, N), jp = wrap_next(j, N), jm = wrap_prev(j, N);
            double hess2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double c = u.node(i, j)[k];
                const double Hxx = (u.node(i, jp)[k] - 2.0 * c + u.node(i, jm)[k]) / (h * h);
                const double Hyy = (u.node(ip, j)[k] - 2.0 * c + u.node(im, j)[k]) / (h * h);
                const double Hxy =
                    (u.node(ip, jp)[k] - u.node(ip, jm)[k] - u.node(im, jp)[k] + u.node(im, jm)[k]) / (4.0 * h * h);
                // tr(G^{-1} H G^{-1} H)
                const double a00 = gi[0] * Hxx + gi[1] * Hxy, a01 = gi[0] * Hxy + gi[1] * Hyy;
                const double a10 = gi[1] * Hxx + gi[2] * Hxy, a11 = gi[1] * Hxy + gi[2] * Hyy;
                hess2 += a00 * a00 + 2.0 * a01 * a10 + a11 * a11;
            }
            const double du2 = 2.0 * e[p];
            res.lhs += phi[p] * phi[p] * (hess2 + du2 * du2) * dA;
            const double* tv = tau.node(i, j);
            tau_term += phi[p] * phi[p] * dot(tv, tv, d) * dA;
        }
    res.pass = res.local_energy <= eps0;
    const double dphi = cutoff_gradient_sup(N, g, {cx, cy, r});
    res.rhs_base = dphi * dphi * res.local_energy + tau_term;
    res.C_fit = res.rhs_base > 0.0 ? res.lhs / res.rhs_base : 0.0;
    return res;
}

std::vector<ConcentrationPoint> detect_concentration_points(const std::vector<std::vector<double>>& snapshots,
                                                            const GridGeometry& geo, double eps0,
                                                            std::vector<double> ladder, std::size_t m) {
    if (snapshots.size() < 2) throw DomainError("concentration detection needs at least 2 snapshots");
    if (ladder.empty()) throw DomainError("radius ladder must be nonempty");
    if (!(eps0 > 0.0)) throw DomainError("eps0 must be positive");
    std::sort(ladder.begin(), ladder.end(), std::greater<>());
    const std::size_t R = geo.rows, C = geo.cols;
    const std::size_t first = snapshots.size() > m ? snapshots.size() - m : 0;

    std::vector<char> persistent(R * C, 1);
    std::vector<double> score(R * C, 0.0);
    auto half = [](double r, double h) { return static_cast<std::size_t>(std::max(1.0, std::round(r / h))); };
    for (std::size_t sidx = first; sidx < snapshots.size(); ++sidx) {
        if (snapshots[sidx].size() != R * C) throw DomainError("snapshot does not match the grid geometry");
        const PrefixSum ps(snapshots[sidx], R, C);
        for (double r : ladder) {
            const std::size_t ki = half(r, geo.hy), kj = half(r, geo.hx);
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) {
                    if (!persistent[i * C + j]) continue;
                    const double w = ps.window(i, j, ki, kj, geo.periodic_rows);
                    if (w < eps0) persistent[i * C + j] = 0;
                    if (sidx + 1 == snapshots.size() && r == ladder.back()) score[i * C + j] = w;
                }
        }
    }
    std::vector<std::size_t> cand;
    for (std::size_t p = 0; p < R * C; ++p)
        if (persistent[p]) cand.push_back(p);
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    const double r_max = ladder.front(), r_min = ladder.back();
    const auto& last = snapshots.back();
    std::vector<ConcentrationPoint> out;
    for (std::size_t p : cand) {
        const std::size_t i = p / C, j = p % C;
        bool suppressed = false;
        for (const auto& q : out)
            if (node_distance(geo, q.row, q.col, i, j, true) < r_max) suppressed = true;
        if (suppressed) continue;
        // refine by the energy centroid inside the smallest window
        std::size_t ci = i, cj = j;
        const std::size_t ki = half(r_min, geo.hy), kj = half(r_min, geo.hx);
        for (int it = 0; it < 3; ++it) {
            double sw = 0.0, sx = 0.0, sy = 0.0;
            for (std::size_t ii : axis_indices(ci, ki, R, geo.periodic_rows, nullptr))
                for (std::size_t jj : axis_indices(cj, kj, C, true, nullptr)) {
                    const double w = last[ii * C + jj];
                    double oy = static_cast<double>(ii) - static_cast<double>(ci);
                    if (geo.periodic_rows) oy = periodic_offset(static_cast<double>(ci), static_cast<double>(ii), static_cast<double>(R));
                    const double ox = periodic_offset(static_cast<double>(cj), static_cast<double>(jj), static_cast<double>(C));
                    sw += w;
                    sx += w * ox;
                    sy += w * oy;
                }
            if (!(sw > 0.0)) break;
            const long ni = static_cast<long>(ci) + std::lround(sy / sw);
            const long nj = static_cast<long>(cj) + std::lround(sx / sw);
            const long Rl = static_cast<long>(R), Cl = static_cast<long>(C);
            const std::size_t nci = geo.periodic_rows ? static_cast<std::size_t>(((ni % Rl) + Rl) % Rl)
                                                      : static_cast<std::size_t>(std::clamp(ni, 0L, Rl - 1));
            const std::size_t ncj = static_cast<std::size_t>(((nj % Cl) + Cl) % Cl);
            if (nci == ci && ncj == cj) break;
            ci = nci;
            cj = ncj;
        }
        ConcentrationPoint cp;
        cp.row = ci;
        cp.col = cj;
        cp.x = static_cast<double>(cj) * geo.hx;
        cp.y = geo.y0 + static_cast<double>(ci) * geo.hy;
        cp.energy = PrefixSum(last, R, C).window(ci, cj, ki, kj, geo.periodic_rows);
        bool dup = false;
        for (const auto& q : out)
            if (node_distance(geo, q.row, q.col, ci, cj, true) < r_max) dup = true;
        if (!dup) out.push_back(cp);
    }
    return out;
}

GoodTimeSequence select_good_times(const FlowHistory& h, double T) {
    const auto& s = h.samples;
    if (s.empty()) throw DomainError("good-time selection needs a nonempty history");
    GoodTimeSequence g;
    g.E0 = s.front().E;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (!(s[k].t < T)) continue;
        const double v = (s[k].tension_l2 + s[k].projection_l2) * std::sqrt(T - s[k].t);
        if (v <= best) {
            best = v;
            g.indices.push_back(k);
            g.times.push_back(s[k].t);
            g.values.push_back(v);
        }
    }
    for (std::size_t k = 0; k + 1 < s.size(); ++k)
        g.tension_integral += 0.5 * (s[k + 1].t - s[k].t) *
                              (s[k].tension_l2 * s[k].tension_l2 + s[k + 1].tension_l2 * s[k + 1].tension_l2);
    g.integral_ok = g.tension_integral <= g.E0 * (1.0 + 1e-9);
    return g;
}

double estimate_scale(const std::vector<double>& ne, const GridGeometry& geo, std::size_t row, std::size_t col,
                      double r_max, std::size_t row_lo, std::size_t row_hi) {
    if (!(r_max > 0.0)) throw DomainError("r_max must be positive");
    row_hi = std::min(row_hi, geo.rows - 1);
    std::vector<std::pair<double, double>> pts;
    const std::size_t ki = static_cast<std::size_t>(std::ceil(r_max / geo.hy));
    const std::size_t kj = static_cast<std::size_t>(std::ceil(r_max / geo.hx));
    for (std::size_t i : axis_indices(row, ki, geo.rows, geo.periodic_rows, nullptr)) {
        if (i < row_lo || i > row_hi) continue;
        for (std::size_t j : axis_indices(col, kj, geo.cols, true, nullptr)) {
            const double d = node_distance(geo, row, col, i, j, false);
            if (d <= r_max) pts.emplace_back(d, ne[i * geo.cols + j]);
        }
    }
    std::sort(pts.begin(), pts.end());
    double total = 0.0;
    for (const auto& p : pts) total += p.second;
    if (!(total > 0.0)) return 0.0;
    double acc = 0.0, prev_d = 0.0, prev_acc = 0.0;
    for (const auto& p : pts) {
        acc += p.second;
        if (acc >= 0.5 * total) {
            if (acc == prev_acc) return p.first;
            const double f = (0.5 * total - prev_acc) / (acc - prev_acc);
            return prev_d + f * (p.first - prev_d);
        }
        prev_d = p.first;
        prev_acc = acc;
    }
    return r_max;
}

BubbleCandidate extract_bubble(const SphereMapField& u, const GridGeometry& geo, std::size_t row, std::size_t col,
                               double scale, const ExtractOptions& opt) {
    BubbleCandidate bc;
    bc.row = row;
    bc.col = col;
    bc.scale = scale;
    if (!(scale > 0.0)) {
        bc.reason = "non-positive scale";
        return bc;
    }
    const double W = 0.5 * opt.window_factor * scale;
    const std::size_t kj = static_cast<std::size_t>(std::round(W / geo.hx));
    const std::size_t ki = static_cast<std::size_t>(std::round(W / geo.hy));
    bc.band = 2 * kj + 1 >= geo.cols;
    bool clipped = false;
    const auto rows = axis_indices(row, ki, geo.rows, geo.periodic_rows, &clipped);
    if (clipped && !bc.band) {
        bc.reason = "window clipped by boundary";
        return bc;
    }
    if (clipped) bc.flags.push_back("band-clipped");
    const auto cols = axis_indices(col, kj, geo.cols, true, nullptr);

    SphereMapField sub(rows.size(), cols.size(), u.dim);
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b)
            std::copy_n(u.node(rows[a], cols[b]), u.dim, sub.node(a, b));
    const bool periodic_cols = bc.band;
    bc.window_energy = window_energy(sub, geo.hx, geo.hy, geo, periodic_cols);
    const double L = std::max(static_cast<double>(cols.size()) * geo.hx, static_cast<double>(rows.size()) * geo.hy);
    const double hx1 = geo.hx / L, hy1 = geo.hy / L;
    bc.energy = window_energy(sub, hx1, hy1, geo, periodic_cols);

    // tension of the rescaled window on its interior nodes
    double t2 = 0.0;
    for (std::size_t a = 1; a + 1 < sub.rows; ++a)
        for (std::size_t b = 0; b < sub.cols; ++b) {
            if (!periodic_cols && (b == 0 || b + 1 == sub.cols)) continue;
            const std::size_t bp = (b + 1) % sub.cols, bm = (b + sub.cols - 1) % sub.cols;
            double lap[8] = {0};
            const double* c = sub.node(a, b);
            for (std::size_t k = 0; k < u.dim && k < 8; ++k) {
                lap[k] = geo.gxx * (sub.node(a, bp)[k] - 2.0 * c[k] + sub.node(a, bm)[k]) / (hx1 * hx1) +
                         geo.gyy * (sub.node(a + 1, b)[k] - 2.0 * c[k] + sub.node(a - 1, b)[k]) / (hy1 * hy1) +
                         2.0 * geo.gxy *
                             (sub.node(a + 1, bp)[k] - sub.node(a + 1, bm)[k] - sub.node(a - 1, bp)[k] +
                              sub.node(a - 1, bm)[k]) /
                             (4.0 * hx1 * hy1);
            }
            const double nrm = dot(lap, c, u.dim);
            for (std::size_t k = 0; k < u.dim; ++k) lap[k] -= nrm * c[k];
            t2 += dot(lap, lap, u.dim) * hx1 * hy1;
        }
    bc.tension = bc.energy > 0.0 ? (scale / L) * std::sqrt(t2) / std::sqrt(bc.energy) : 0.0;

    // energy centroid relative to the window centre
    const auto ne = node_energies(u, geo);
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) {
            const double w = ne[rows[a] * geo.cols + cols[b]];
            double oy = static_cast<double>(rows[a]) - static_cast<double>(row);
            if (geo.periodic_rows) oy = periodic_offset(static_cast<double>(row), static_cast<double>(rows[a]), static_cast<double>(geo.rows));
            const double ox = periodic_offset(static_cast<double>(col), static_cast<double>(cols[b]), static_cast<double>(geo.cols));
            sw += w;
            sx += w * ox * geo.hx;
            sy += w * oy * geo.hy;
        }
    if (sw > 0.0) bc.centroid_offset = bc.band ? std::abs(sy / sw) : std::hypot(sx / sw, sy / sw);
    const bool misaligned = bc.centroid_offset > opt.misalign_factor * scale;
    if (misaligned) bc.flags.push_back("misaligned");
    if (opt.time_to_singularity > 0.0 && scale > opt.scale_cap * std::sqrt(opt.time_to_singularity))
        bc.flags.push_back("scale-exceeds-cap");

    if (bc.energy < opt.energy_floor) {
        bc.reason = "energy below floor";
    } else if (bc.tension > opt.tension_threshold) {
        bc.reason = "tension above threshold";
    } else if (misaligned) {
        bc.reason = "misaligned window";
    } else {
        bc.accepted = true;
    }
    bc.window = std::move(sub);
    return bc;
}

double circle_oscillation(const SphereMapField& u, std::size_t row) {
    if (row >= u.rows) throw DomainError("row outside the grid");
    double worst = 0.0;
    for (std::size_t a = 0; a < u.cols; ++a)
        for (std::size_t b = a + 1; b < u.cols; ++b) worst = std::max(worst, dist2(u.node(row, a), u.node(row, b), u.dim));
    return std::sqrt(worst);
}

BubbleBranchReport segment_bubble_branch(const SphereMapField& u, const GridGeometry& geo, const BranchOptions& opt) {
    if (u.rows != geo.rows || u.cols != geo.cols) throw DomainError("field does not match the grid geometry");
    if (u.rows < 2 * opt.lambda_trim) throw DomainError("cylinder shorter than twice the trim length");
    BubbleBranchReport rep;
    const std::size_t R = geo.rows, C = geo.cols;
    rep.osc_profile.resize(R);
    rep.s_values.resize(R);
    for (std::size_t i = 0; i < R; ++i) {
        rep.osc_profile[i] = circle_oscillation(u, i);
        rep.s_values[i] = geo.y0 + geo.hy * static_cast<double>(i);
    }
    // maximal runs by classification
    std::vector<BranchSegment> runs;
    for (std::size_t i = 0; i < R; ++i) {
        const bool bub = rep.osc_profile[i] > opt.osc_threshold;
        if (runs.empty() || runs.back().bubble_region != bub) runs.push_back({i, i, bub, 0.0, 0.0});
        else runs.back().row_end = i;
    }
    // short necks between two bubble regions are absorbed into a single region
    std::vector<BranchSegment> merged;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const auto& r = runs[k];
        const bool interior = k > 0 && k + 1 < runs.size();
        const std::size_t len = r.row_end - r.row_begin + 1;
        if (!r.bubble_region && interior && len < 2 * opt.lambda_trim) {
            merged.back().row_end = r.row_end;
            continue;
        }
        if (!merged.empty() && merged.back().bubble_region && r.bubble_region) {
            merged.back().row_end = r.row_end;
            continue;
        }
        merged.push_back(r);
    }
    const auto ne = node_energies(u, geo);
    for (double x : ne) rep.total_energy += x;
    for (auto& seg : merged) {
        for (std::size_t i = seg.row_begin; i <= seg.row_end; ++i) {
            seg.max_osc = std::max(seg.max_osc, rep.osc_profile[i]);
            for (std::size_t j = 0; j < C; ++j) seg.energy += ne[i * C + j];
        }
        rep.segment_energy_sum += seg.energy;
    }
    for (std::size_t k = 1; k < merged.size(); ++k) {
        rep.split_rows.push_back(merged[k].row_begin);
        rep.splits.push_back(geo.y0 + geo.hy * (static_cast<double>(merged[k].row_begin) - 0.5));
    }
    for (const auto& seg : merged) {
        if (!seg.bubble_region) continue;
        std::size_t best = seg.row_begin * C;
        for (std::size_t p = seg.row_begin * C; p < (seg.row_end + 1) * C; ++p)
            if (ne[p] > ne[best]) best = p;
        const std::size_t row = best / C, col = best % C;
        const double half_extent = 0.5 * geo.hy * static_cast<double>(seg.row_end - seg.row_begin + 1);
        const double r_max = std::max(half_extent, 2.0 * geo.hy);
        const double scale = estimate_scale(ne, geo, row, col, r_max, seg.row_begin, seg.row_end);
        rep.candidates.push_back(extract_bubble(u, geo, row, col, scale, opt.extract));
    }
    rep.segments = std::move(merged);
    return rep;
}

EnergyLedger energy_ledger(const std::vector<LedgerSnapshot>& snaps, double T, std::vector<double> ladder, double K,
                           const std::vector<double>& bubble_energies) {
    if (snaps.empty()) throw DomainError("energy ledger needs a final snapshot");
    if (ladder.empty()) throw DomainError("delta ladder must be nonempty");
    std::sort(ladder.begin(), ladder.end(), std::greater<>());
    EnergyLedger L;
    L.K = K;
    L.delta_ladder = ladder;
    const auto& fin = snaps.back();
    L.E_T = 0.0;
    for (double x : fin.node_energy) L.E_T += x;
    for (double delta : ladder) {
        const auto mask = fin.thin_mask(delta);
        double thick = 0.0, thin = 0.0;
        for (std::size_t p = 0; p < fin.node_energy.size(); ++p) (mask[p] ? thin : thick) += fin.node_energy[p];
        L.thick_by_delta.push_back(thick);
        L.E_thick = thick;
        L.thin_mask_energy = thin;
    }
    L.E_thin = L.E_T - L.E_thick;
    L.additivity_defect = L.E_T > 0.0 ? std::abs(L.E_thick + L.thin_mask_energy - L.E_T) / L.E_T
                                      : std::abs(L.E_thick + L.thin_mask_energy);
    auto thin_energy = [](const LedgerSnapshot& s, double delta) {
        const auto mask = s.thin_mask(delta);
        double e = 0.0;
        for (std::size_t p = 0; p < s.node_energy.size(); ++p)
            if (mask[p]) e += s.node_energy[p];
        return e;
    };
    for (const auto& s : snaps) {
        if (!(s.t < T)) continue;
        const double d1 = T - s.t;
        const double e1 = thin_energy(s, d1);
        L.checks_T_minus_t.push_back({s.t, d1, e1, std::abs(e1 - L.E_thin)});
        const double d2 = K * (T - s.t) * std::max(0.0, s.E - L.E_T);
        if (d2 > 0.0) {
            const double e2 = thin_energy(s, d2);
            L.checks_K.push_back({s.t, d2, e2, std::abs(e2 - L.E_thin)});
        }
    }
    L.bubble_energies = bubble_energies;
    for (double b : bubble_energies) L.bubble_total += b;
    return L;
}

}  // namespace tmflow
