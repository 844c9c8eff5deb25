#include "tmflow/hypgeom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "tmflow/error.hpp"

namespace tmflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_positive(double x, const char* name) {
    if (!std::isfinite(x) || !(x > 0.0)) throw DomainError(std::string(name) + " must be finite and positive");
}

}  // namespace

double collar_half_length(double ell, double delta) {
    require_positive(ell, "ell");
    require_positive(delta, "delta");
    if (2.0 * delta <= ell) return 0.0;
    double arg = std::sinh(0.5 * ell) / std::sinh(delta);
    if (arg > 1.0) {
        if (arg - 1.0 > 1e-14) throw DomainError("collar arccos argument exceeds 1");
        arg = 1.0;
    }
    if (arg < 0.0) arg = 0.0;
    const double X = kTwoPi / ell * std::acos(arg);
    if (!std::isfinite(X)) throw DomainError("collar half-length is not finite");
    return X;
}

double collar_conformal_factor(double ell, double s) {
    require_positive(ell, "ell");
    if (!std::isfinite(s)) throw DomainError("s must be finite");
    const double phase = ell * s / kTwoPi;
    if (!(std::abs(phase) < 0.5 * std::numbers::pi)) throw DomainError("s lies outside the collar cosine domain");
    return ell / (kTwoPi * std::cos(phase));
}

double collar_injectivity_lower_bound(double ell, double s) { return collar_conformal_factor(ell, s); }

double CollarGeometry::rho(double s) const { return collar_conformal_factor(ell, s); }

CollarGeometry make_collar(double ell, double delta) {
    return CollarGeometry{ell, delta, collar_half_length(ell, delta)};
}

double collar_identity_residual(double ell, double delta) {
    const double X = collar_half_length(ell, delta);
    if (X == 0.0) return 0.0;
    const double sd = std::sinh(delta);
    return std::abs(std::cos(ell * X / kTwoPi) * sd - std::sinh(0.5 * ell)) / sd;
}

double pinching_threshold(double K, double T, double t, double E_t, double E_T) {
    if (!(K >= 0.0) || !std::isfinite(K)) throw DomainError("K must be finite and nonnegative");
    if (!(t < T)) throw DomainError("pinching threshold requires t < T");
    if (E_t < E_T) throw DomainError("pinching threshold requires E(t) >= E(T)");
    return K * (T - t) * (E_t - E_T);
}

DecayFit geodesic_length_decay_fit(const std::vector<LengthSample>& history, double T, double E_T) {
    if (history.empty()) throw DomainError("decay fit needs a nonempty history");
    DecayFit fit;
    bool any_positive_denominator = false;
    for (const auto& h : history) {
        if (!(h.t < T)) throw DomainError("decay fit history must satisfy t < T");
        const double denom = (T - h.t) * (h.E - E_T);
        if (denom > 0.0) {
            any_positive_denominator = true;
            fit.C = std::max(fit.C, h.ell / denom);
            ++fit.samples_used;
        }
    }
    fit.vacuous = !any_positive_denominator;
    return fit;
}

double gauss_bonnet_area(const SurfaceTopology& topology) {
    if (topology.genus < 0 || topology.punctures < 0) throw DomainError("genus and punctures must be nonnegative");
    const int chi = 2 - 2 * topology.genus - topology.punctures;
    if (chi >= 0) throw DomainError("topology is not hyperbolic (Euler characteristic must be negative)");
    return -2.0 * std::numbers::pi * chi;
}

DegenerationModel make_degeneration(int genus, int k, std::vector<SurfaceTopology> components) {
    if (genus < 2) throw DomainError("degeneration model needs genus >= 2");
    if (k < 1 || k > 3 * (genus - 1)) throw DomainError("number of pinching collars must lie in [1, 3(genus-1)]");
    int total_punctures = 0;
    int total_chi = 0;
    for (const auto& c : components) {
        if (c.genus < 0 || c.punctures < 0) throw DomainError("component genus and punctures must be nonnegative");
        if (2 - 2 * c.genus - c.punctures >= 0) throw DomainError("every limit component must be hyperbolic");
        total_punctures += c.punctures;
        total_chi += 2 - 2 * c.genus - c.punctures;
    }
    if (!components.empty()) {
        if (total_punctures != 2 * k) throw DomainError("limit components must carry exactly 2k punctures");
        if (total_chi != 2 - 2 * genus) throw DomainError("limit components must preserve the Euler characteristic");
    }
    return DegenerationModel{genus, k, 2 * k, std::move(components)};
}

double liouville_curvature_residual(const std::vector<double>& rho, std::size_t ns, std::size_t ntheta, double hs,
                                    double htheta) {
    if (ns < 8 || ntheta < 8) throw DomainError("grid too coarse: need at least 8 points per direction");
    if (rho.size() != ns * ntheta) throw DomainError("rho sample count does not match the grid");
    require_positive(hs, "hs");
    require_positive(htheta, "htheta");
    std::vector<double> lr(rho.size());
    for (std::size_t p = 0; p < rho.size(); ++p) {
        if (!(rho[p] > 0.0)) throw DomainError("rho samples must be positive");
        lr[p] = std::log(rho[p]);
    }
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < ns; ++i) {
        for (std::size_t j = 0; j < ntheta; ++j) {
            const std::size_t jp = (j + 1) % ntheta, jm = (j + ntheta - 1) % ntheta;
            const double c = lr[i * ntheta + j];
            const double lap = (lr[(i + 1) * ntheta + j] - 2.0 * c + lr[(i - 1) * ntheta + j]) / (hs * hs) +
                               (lr[i * ntheta + jp] - 2.0 * c + lr[i * ntheta + jm]) / (htheta * htheta);
            const double r = rho[i * ntheta + j];
            const double K = -lap / (r * r);
            worst = std::max(worst, std::abs(K + 1.0));
        }
    }
    return worst;
}

std::vector<double> sample_collar_rho(double ell, double X, std::size_t ns_intervals, std::size_t ntheta) {
    const std::size_t ns = ns_intervals + 1;
    std::vector<double> rho(ns * ntheta);
    const double hs = 2.0 * X / static_cast<double>(ns_intervals);
    for (std::size_t i = 0; i < ns; ++i) {
        const double r = collar_conformal_factor(ell, -X + hs * static_cast<double>(i));
        std::fill_n(rho.begin() + static_cast<std::ptrdiff_t>(i * ntheta), ntheta, r);
    }
    return rho;
}

std::vector<CollarTableRow> collar_table(const std::vector<double>& ells, const std::vector<double>& deltas) {
    std::vector<CollarTableRow> rows;
    for (double ell : ells) {
        for (double delta : deltas) {
            CollarTableRow r{};
            r.ell = ell;
            r.delta = delta;
            r.X = collar_half_length(ell, delta);
            r.rho_min = collar_conformal_factor(ell, 0.0);
            r.rho_boundary = collar_conformal_factor(ell, r.X);
            r.identity_residual = collar_identity_residual(ell, delta);
            rows.push_back(r);
        }
    }
    return rows;
}

std::string collar_table_csv(const std::vector<CollarTableRow>& rows) {
    std::string out = "ell,delta,X,rho_min,rho_boundary,identity_residual\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.ell, r.delta, r.X, r.rho_min,
                      r.rho_boundary, r.identity_residual);
        out += buf;
    }
    return out;
}

}  // namespace tmflow
