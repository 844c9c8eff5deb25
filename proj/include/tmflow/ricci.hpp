#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace tmflow {

// Conformal metric e^{2v} g_round on a latitude-longitude grid of cells.
// Row i covers theta in [i, i+1] * pi/ntheta, column j covers phi in
// [j, j+1] * 2pi/nphi. The state is stored as u = e^{2v} per cell.
struct SphereConformalMetric {
    std::size_t ntheta = 64;
    std::size_t nphi = 128;
    std::vector<double> u;
    std::vector<std::array<double, 3>> punctures;  // unit vectors on the grid sphere
    double cap = std::numeric_limits<double>::infinity();

    double dtheta() const;
    double dphi() const;
    double theta_center(std::size_t i) const;
    double cell_area(std::size_t i) const;  // round area of any cell in row i
    double v(std::size_t i, std::size_t j) const;
};

// Complete elliptic integral of the first kind K(m) for complex parameter m.
std::complex<double> elliptic_k(std::complex<double> m);

// Hyperbolic density on C minus {0, 1} (curvature -1, |dz| units).
double thrice_punctured_density(std::complex<double> z);

// Conformal factor v of the complete hyperbolic metric on the sphere punctured
// at the model points {south pole, north pole, (n-2)-th roots of unity on the
// equator}, relative to the round metric, evaluated at the unit vector y.
double hyperbolic_factor_model(int n, const std::array<double, 3>& y);

// Orthogonal matrix R placing the model punctures away from the grid poles;
// grid point x corresponds to model point R^T x.
std::array<double, 9> puncture_rotation();

struct CuspedInitial {
    SphereConformalMetric metric;
    int n = 3;
    double area = 0.0;              // grid quadrature of the capped factor
    double exact_area = 0.0;        // 2 pi (n - 2)
    double deficit_measured = 0.0;  // exact_area - area
    double deficit_analytic = 0.0;  // capping loss summed over the cusps
    double beta_mean = 0.0;         // fitted cusp constant, averaged over punctures
    double curvature_residual = 0.0;  // max |K + 1| at cell centres outside the caps
};

// Capped hyperbolic initial data with n >= 3 punctures. cap >= 20 bounds v.
CuspedInitial build_cusped_initial(int n, double cap, std::size_t ntheta = 64, std::size_t nphi = 128);

// v == c everywhere.
SphereConformalMetric round_metric(std::size_t ntheta, std::size_t nphi, double c = 0.0);

double sphere_area(const SphereConformalMetric& m);

// Gauss curvature per cell, K = e^{-2v} (1 - Delta_round v), with the pole
// rows using their ring-averaged Laplacian.
std::vector<double> gauss_curvature(const SphereConformalMetric& m);

// Largest admissible step for the explicit latitude part.
double ricci_cfl_limit(const SphereConformalMetric& m, double cfl = 0.5);

// One step of dv/dt = -K written for u = e^{2v} as du/dt = Delta_round(log u) - 2.
// Throws DomainError when dt exceeds ricci_cfl_limit(m) and NumericalAbort on
// non-finite values.
void ricci_step(SphereConformalMetric& m, double dt);

struct RicciConfig {
    double cfl = 0.2;
    std::size_t sample_every = 10;
    double curvature_blowup = 1e3;
    double u_floor = 1e-4;
    double max_time = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 5'000'000;
};

struct RicciSample {
    double t = 0.0;
    double area = 0.0;
    double min_K = 0.0;
    double max_K = 0.0;
    double deviation = 0.0;        // sup |2 (T_pred - t) K - 1|
    double total_curvature = 0.0;  // quadrature of K dA
};

struct RicciRun {
    std::vector<RicciSample> samples;
    std::string status;             // "near-extinction", "time-limit", "step-limit"
    double T_pred = 0.0;            // A(0) / (8 pi)
    double min_K_violation = 0.0;   // largest per-step decrease of min K
    double gauss_bonnet_max_error = 0.0;  // max |int K dA - 4 pi| / 4 pi over steps
    std::size_t steps = 0;
    SphereConformalMetric final_metric;
};

RicciRun run_ricci(SphereConformalMetric m, const RicciConfig& cfg = {});

struct RicciRunReport {
    int n = 3;
    double area0 = 0.0;
    double slope = 0.0;            // least-squares dA/dt after cap smoothing
    double slope_rel_error = 0.0;  // |slope + 8 pi| / 8 pi
    double T_pred = 0.0;
    double T_ref = 0.0;          // (n - 2) / 4
    double deficit = 0.0;          // 2 pi (n - 2) - A(0)
    double deficit_rel = 0.0;      // deficit / (2 pi (n - 2))
    double deviation_last = 0.0;   // at the last stable sample
    double last_quartile_max_increase = 0.0;
    bool area_strictly_decreasing = true;
    std::size_t samples = 0;
};

// Throws DomainError for fewer than 10 samples or n < 3.
RicciRunReport extinction_report(const RicciRun& run, int n);

}  // namespace tmflow
