#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tmflow/collarflow.hpp"
#include "tmflow/grid.hpp"
#include "tmflow/torusflow.hpp"

namespace tmflow {

// Constant-coefficient grid geometry shared by the torus and the flat
// cylinder: rows along y (spacing hy), columns along x (spacing hx, always
// periodic). ginv holds (g^xx, g^xy, g^yy).
struct GridGeometry {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double hx = 1.0;
    double hy = 1.0;
    bool periodic_rows = true;
    double y0 = 0.0;  // coordinate of row 0
    double gxx = 1.0, gxy = 0.0, gyy = 1.0;

    double area_element() const { return hx * hy; }
};

GridGeometry torus_geometry(std::size_t N, const TorusModulus& g);
GridGeometry cylinder_geometry(const CylinderDomain& dom);

// Per-node energies (density times area element); they sum to the energy.
std::vector<double> node_energies(const SphereMapField& u, const GridGeometry& geo);

// Discrete energy of a (sub)field using only its internal edges. Columns wrap
// when periodic_cols is set.
double window_energy(const SphereMapField& u, double hx, double hy, const GridGeometry& coeffs, bool periodic_cols);

struct CutoffFunction {
    double cx = 0.5;
    double cy = 0.5;
    double r = 0.25;
};

// psi(rho): 1 on [0, 1/2], 0 beyond 1, smooth cubic in between (|psi'| <= 3).
double cutoff_profile(double rho);
double cutoff_profile_derivative(double rho);

// Nodal weights phi = psi(d^2 / r^2), d the periodic g-distance on the torus.
std::vector<double> cutoff_weights(std::size_t N, const TorusModulus& g, const CutoffFunction& phi);
// sup over nodes of |d phi|_g.
double cutoff_gradient_sup(std::size_t N, const TorusModulus& g, const CutoffFunction& phi);

double cutoff_energy(const SphereMapField& u, const TorusModulus& g, const std::vector<double>& phi);

struct DriftReport {
    double max_observed = 0.0;  // max |E_phi(t) - E_phi(s)|
    double C = 0.0;             // least constant making the local energy bound hold
    std::size_t pairs = 0;
    bool finite = true;
};

DriftReport cutoff_energy_drift(const std::vector<double>& t, const std::vector<double>& E,
                                const std::vector<double>& Ephi, double dphi_sup, double delta = 1.0);

struct EpsRegularityResult {
    bool pass = false;
    double local_energy = 0.0;
    double lhs = 0.0;       // sum phi^2 (|nabla du|^2 + |du|^4) dA
    double rhs_base = 0.0;  // |d phi|_inf^2 E_loc + sum phi^2 |tau|^2 dA
    double C_fit = 0.0;
};

EpsRegularityResult eps_regularity_gate(const SphereMapField& u, const TorusModulus& g, double cx, double cy,
                                        double r, double eps0);

struct ConcentrationPoint {
    std::size_t row = 0;
    std::size_t col = 0;
    double x = 0.0;
    double y = 0.0;
    double energy = 0.0;  // energy in the smallest ladder window at the last snapshot
};

// Each entry of snapshots holds node energies on the common geometry.
std::vector<ConcentrationPoint> detect_concentration_points(const std::vector<std::vector<double>>& snapshots,
                                                            const GridGeometry& geo, double eps0,
                                                            std::vector<double> ladder, std::size_t m = 5);

struct GoodTimeSequence {
    std::vector<std::size_t> indices;
    std::vector<double> times;
    std::vector<double> values;
    double tension_integral = 0.0;  // integral of ||tau||^2 dt over the history
    double E0 = 0.0;
    bool integral_ok = true;  // tension_integral <= E(0)
};

GoodTimeSequence select_good_times(const FlowHistory& h, double T);

struct ExtractOptions {
    double window_factor = 20.0;
    double tension_threshold = 0.25;
    double energy_floor = 1.0;
    double misalign_factor = 1.0;
    double scale_cap = 1.0;
    double time_to_singularity = -1.0;  // T - t_n when known
};

struct BubbleCandidate {
    bool accepted = false;
    std::string reason;  // empty when accepted
    std::vector<std::string> flags;
    std::size_t row = 0, col = 0;
    double scale = 0.0;
    bool band = false;           // window spans the full periodic direction
    double window_energy = 0.0;  // before rescaling
    double energy = 0.0;         // after rescaling to unit size
    double tension = 0.0;        // scale * ||tau||_{L2(window)} / sqrt(energy)
    double centroid_offset = 0.0;
    SphereMapField window;
};

BubbleCandidate extract_bubble(const SphereMapField& u, const GridGeometry& geo, std::size_t row, std::size_t col,
                               double scale, const ExtractOptions& opt = {});

// Radius at which the centred disc holds half of the energy found within r_max.
double estimate_scale(const std::vector<double>& node_energy, const GridGeometry& geo, std::size_t row,
                      std::size_t col, double r_max, std::size_t row_lo = 0,
                      std::size_t row_hi = std::numeric_limits<std::size_t>::max());

double circle_oscillation(const SphereMapField& u, std::size_t row);

struct BranchSegment {
    std::size_t row_begin = 0;  // inclusive
    std::size_t row_end = 0;    // inclusive
    bool bubble_region = false;
    double energy = 0.0;
    double max_osc = 0.0;
};

struct BranchOptions {
    double osc_threshold = 0.1;
    std::size_t lambda_trim = 5;
    ExtractOptions extract;
};

struct BubbleBranchReport {
    std::vector<double> osc_profile;
    std::vector<double> s_values;
    std::vector<double> splits;  // interior split positions in s
    std::vector<std::size_t> split_rows;  // first row of each segment after a split
    std::vector<BranchSegment> segments;
    std::vector<BubbleCandidate> candidates;
    double total_energy = 0.0;
    double segment_energy_sum = 0.0;
};

BubbleBranchReport segment_bubble_branch(const SphereMapField& u, const GridGeometry& geo,
                                         const BranchOptions& opt = {});

struct LedgerSnapshot {
    double t = 0.0;
    double E = 0.0;
    std::vector<double> node_energy;
    // Thin-part indicator per node for threshold delta.
    std::function<std::vector<bool>(double delta)> thin_mask;
};

struct LedgerCheck {
    double t = 0.0;
    double delta = 0.0;
    double thin_energy = 0.0;
    double discrepancy = 0.0;  // |thin_energy - E_thin|
};

struct EnergyLedger {
    double E_T = 0.0;
    double E_thick = 0.0;
    double E_thin = 0.0;
    double thin_mask_energy = 0.0;   // energy on the thin mask at the smallest delta
    double additivity_defect = 0.0;  // |E_thick + thin_mask_energy - E_T| / E_T
    std::vector<double> delta_ladder;
    std::vector<double> thick_by_delta;
    std::vector<LedgerCheck> checks_T_minus_t;
    std::vector<LedgerCheck> checks_K;
    double K = 0.0;
    std::vector<double> bubble_energies;
    double bubble_total = 0.0;
};

// snapshots are ordered in time; the last one is the final state at T_final.
EnergyLedger energy_ledger(const std::vector<LedgerSnapshot>& snapshots, double T, std::vector<double> delta_ladder,
                           double K, const std::vector<double>& bubble_energies);

}  // namespace tmflow
