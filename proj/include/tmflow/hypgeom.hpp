#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tmflow {

// Hyperbolic collar around a closed geodesic of length ell, truncated at
// thinness threshold delta. The cylinder is (-X, X) x S^1 with metric
// rho_ell(s)^2 (ds^2 + dtheta^2).
struct CollarGeometry {
    double ell = 0.0;
    double delta = 0.0;
    double X = 0.0;

    double rho(double s) const;
};

double collar_half_length(double ell, double delta);
double collar_conformal_factor(double ell, double s);
double collar_injectivity_lower_bound(double ell, double s);
CollarGeometry make_collar(double ell, double delta);

// |cos(ell X / 2 pi) sinh(delta) - sinh(ell / 2)| for the returned X (0 when X = 0).
double collar_identity_residual(double ell, double delta);

double pinching_threshold(double K, double T, double t, double E_t, double E_T);

struct LengthSample {
    double t = 0.0;
    double ell = 0.0;
    double E = 0.0;
};

struct DecayFit {
    double C = 0.0;
    bool vacuous = false;
    std::size_t samples_used = 0;
};

DecayFit geodesic_length_decay_fit(const std::vector<LengthSample>& history, double T, double E_T);

struct SurfaceTopology {
    int genus = 0;
    int punctures = 0;
    int components = 1;
};

double gauss_bonnet_area(const SurfaceTopology& topology);

// Bookkeeping for k pinching collars on a closed surface of genus >= 2.
struct DegenerationModel {
    int genus = 2;
    int k = 1;
    int puncture_count = 2;
    std::vector<SurfaceTopology> components;
};

DegenerationModel make_degeneration(int genus, int k, std::vector<SurfaceTopology> components);

// rho sampled on an (ns x ntheta) grid, row-major, rows along s. Returns
// max over interior rows of |K + 1| with K = -rho^{-2} Lap_flat(log rho),
// using centered differences with spacings hs, htheta (periodic in theta).
double liouville_curvature_residual(const std::vector<double>& rho, std::size_t ns, std::size_t ntheta,
                                    double hs, double htheta);

// Samples rho_ell on nodes s_i = -X + i * 2X / ns_intervals (i = 0..ns_intervals).
std::vector<double> sample_collar_rho(double ell, double X, std::size_t ns_intervals, std::size_t ntheta);

struct CollarTableRow {
    double ell, delta, X, rho_min, rho_boundary, identity_residual;
};

std::vector<CollarTableRow> collar_table(const std::vector<double>& ells, const std::vector<double>& deltas);
std::string collar_table_csv(const std::vector<CollarTableRow>& rows);

}  // namespace tmflow
