#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tmflow/grid.hpp"

namespace tmflow {

// Unit-area flat metric g = b^{-1}(dx^2 + 2a dx dy + (a^2 + b^2) dy^2) on [0,1)^2,
// conformal coordinate z = x + tau y with tau = a + i b.
struct TorusModulus {
    double a = 0.0;
    double b = 1.0;

    std::complex<double> tau() const { return {a, b}; }
    // Metric and inverse metric entries in (x, y) coordinates.
    std::array<double, 3> metric() const;          // gxx, gxy, gyy
    std::array<double, 3> inverse_metric() const;  // g^xx, g^xy, g^yy
    double det() const;
    double min_eigenvalue() const;
};

struct FlowConfig {
    double eta = 1.0;
    double dt = 0.0;  // 0 selects the CFL limit at every step
    std::size_t N = 64;
    int target_dim = 2;  // n for S^n
    double cfl_factor = 0.2;
    double max_time = 0.1;
    double inj_floor = 1e-3;
    std::size_t sample_every = 10;
    std::size_t snapshot_every = 0;  // 0 keeps only initial and final snapshots
};

struct FlowState {
    double t = 0.0;
    SphereMapField u;
    TorusModulus g;
};

double energy(const SphereMapField& u, const TorusModulus& g);
// Per-node energy density; sum(density) * h^2 equals energy(u, g) exactly.
std::vector<double> energy_density(const SphereMapField& u, const TorusModulus& g);
// Discrete Laplace-Beltrami operator applied componentwise.
SphereMapField laplacian(const SphereMapField& u, const TorusModulus& g);
SphereMapField tension_field(const SphereMapField& u, const TorusModulus& g);
double l2_norm(const SphereMapField& f);  // (h^2 sum |f|^2)^{1/2}
double sup_norm(const SphereMapField& f);

// Averaged pullback matrix entries (S_xx, S_xy, S_yy) consistent with energy().
std::array<double, 3> pullback_means(const SphereMapField& u);
std::vector<std::complex<double>> hopf_differential(const SphereMapField& u, const TorusModulus& g);
std::complex<double> project_holomorphic(const std::vector<std::complex<double>>& phi, const TorusModulus& g);

// Norms of the quadratic differential c dz^2 on the unit-area torus.
double quadratic_differential_norm(std::complex<double> c, const TorusModulus& g);
double real_part_norm(std::complex<double> c, const TorusModulus& g);
// Symmetric tensor Re(c dz^2) in (x, y) components: (T_xx, T_xy, T_yy).
std::array<double, 3> real_part_tensor(std::complex<double> c, const TorusModulus& g);

struct MetricVelocity {
    std::complex<double> c;    // coefficient of P_g(Phi) = c dz^2, Phi = 4<u_z,u_z> dz^2
    double da = 0.0;           // d a / dt
    double db = 0.0;           // d b / dt
    double projection_l2 = 0;  // ||P_g Phi||
    double speed = 0.0;        // ||d g / dt||
};

MetricVelocity metric_velocity(const SphereMapField& u, const TorusModulus& g, double eta);

struct Diagnostics {
    double E = 0.0;
    double tension_l2 = 0.0;
    double projection_l2 = 0.0;
    double speed = 0.0;
    double inj = 0.0;
};

Diagnostics diagnose(const FlowState& s, double eta);

double cfl_limit(const TorusModulus& g, std::size_t N, double cfl_factor);

struct StepOutcome {
    FlowState state;
    double arc = 0.0;  // speed at the midpoint stage times dt
};

StepOutcome step(const FlowState& s, double dt, const FlowConfig& cfg);

double injectivity_radius(const TorusModulus& g);

struct HistorySample {
    double t = 0.0;
    double E = 0.0;
    double tension_l2 = 0.0;
    double projection_l2 = 0.0;
    double a = 0.0;
    double b = 1.0;
    double inj = 0.0;
    double speed_l2 = 0.0;
    double arc_length = std::numeric_limits<double>::quiet_NaN();  // cumulative integral of speed
};

struct FlowHistory {
    std::vector<HistorySample> samples;
};

double energy_identity_residual(const FlowHistory& h, double eta, double floor = 1e-12);

struct HorizontalReport {
    std::vector<double> L;    // L(t_k) = integral from t_k to T of the speed
    std::vector<double> rhs;  // eta^2 (T - t_k)(E(t_k) - E(T))
    double min_margin = 0.0;  // min over k of rhs - L^2
    bool bound_holds = true;
    double K0 = 0.0;          // least K0 with |d/dt inj^{1/2}| <= K0 * speed
};

// Tolerance is relative to rhs and absorbs floating-point rounding only.
HorizontalReport horizontal_diagnostics(const FlowHistory& h, double eta, double rel_tol = 1e-12);

// Initial data presets.
SphereMapField make_constant_map(std::size_t N, int target_dim);
SphereMapField make_wrap_map(std::size_t N, int target_dim);
SphereMapField make_wrap_perturbed(std::size_t N, int target_dim, double amplitude, std::uint64_t seed);

struct TorusRunResult {
    FlowHistory history;
    std::vector<FlowState> snapshots;
    FlowState final_state;
    std::string status;  // "degenerate" | "timeout"
    double max_energy_increase = 0.0;  // max over steps of E_{k+1} - E_k
    double max_norm_defect = 0.0;
    double max_det_defect = 0.0;
};

TorusRunResult run_torus(const FlowState& initial, const FlowConfig& cfg);

}  // namespace tmflow
