#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tmflow/grid.hpp"
#include "tmflow/torusflow.hpp"

namespace tmflow {

struct CollarConfig {
    double ell0 = 1.0;
    double T = 1.0;
    double delta = 0.6;  // fixes the grid window X0 = X(ell0, delta)
    double ell_floor = 0.1;
    double cfl_factor = 0.2;
    double dt = 0.0;  // 0 selects the CFL limit at every step
    double max_time = std::numeric_limits<double>::infinity();
    std::size_t n_theta = 32;
    int target_dim = 2;
    std::size_t sample_every = 50;
    std::size_t snapshot_every = 0;
    std::string schedule = "linear";  // "linear" | "constant"
    std::string preset = "neck-bubble";
    double perturbation = 0.05;
    std::uint64_t seed = 1;
};

// Uniform grid on [-X, X] x S^1: rows along s (including both end rows),
// columns along theta (periodic).
struct CylinderDomain {
    double X = 0.0;
    std::size_t ns = 0;
    std::size_t ntheta = 0;
    double hs = 0.0;
    double htheta = 0.0;

    double s(std::size_t i) const { return -X + hs * static_cast<double>(i); }
    static CylinderDomain make(double X, std::size_t ntheta);
};

double schedule_ell(const CollarConfig& cfg, double t);

struct CollarFlowState {
    double t = 0.0;
    double ell = 1.0;
    SphereMapField u;  // rows 0 and ns-1 hold the prescribed boundary loops
};

// Flat-gauge energy density per node; sum(density) * hs * htheta is the energy.
// End rows carry half weight for the theta edges; s edges are split between
// their two nodes.
std::vector<double> cylinder_energy_density(const SphereMapField& u, const CylinderDomain& dom);
double cylinder_energy(const SphereMapField& u, const CylinderDomain& dom);
// Same energy assembled in the hyperbolic gauge (rho^{-2}|du|^2 against rho^2 dA).
double cylinder_energy_g(const SphereMapField& u, const CylinderDomain& dom, double ell);

// P_T(Lap_flat u) on interior rows, zero on the end rows.
SphereMapField flat_tension(const SphereMapField& u, const CylinderDomain& dom);

struct FlatTensionReport {
    double flat_l2 = 0.0;     // ||tau_flat||_{L2(flat)}
    double g_l2 = 0.0;        // ||tau_g||_{L2(g)}
    double sup_rho = 0.0;
    double margin = 0.0;      // sup_rho * g_l2 - flat_l2
};

FlatTensionReport flat_gauge_tension(const CollarFlowState& s, const CylinderDomain& dom);

double collar_cfl_limit(const CylinderDomain& dom, double ell, double cfl_factor);

CollarFlowState step_map_on_collar(const CollarFlowState& s, const CylinderDomain& dom, const CollarConfig& cfg,
                                   double dt);

struct ThinPartEnergy {
    double X = 0.0;       // current subcollar half-length X(ell(t), delta)
    double flat = 0.0;
    double g_gauge = 0.0;
};

ThinPartEnergy thin_part_energy(const CollarFlowState& s, const CylinderDomain& dom, double delta);

SphereMapField make_collar_initial(const CollarConfig& cfg, const CylinderDomain& dom);

struct CollarRunResult {
    CylinderDomain dom;
    FlowHistory history;  // b holds ell, a holds X0, inj holds ell / 2
    std::vector<FlatTensionReport> tension_reports;  // one per history sample
    std::vector<CollarFlowState> snapshots;
    CollarFlowState final_state;
    std::string status;  // "pinched" | "timeout"
    double min_tension_margin = 0.0;
    double max_gauge_defect = 0.0;       // max |E_flat - E_g| / E
    bool boundary_rows_intact = true;
};

CollarRunResult run_collar(const CollarConfig& cfg);

// Validates numeric fields; throws ConfigError listing every violation.
void validate(const CollarConfig& cfg);

}  // namespace tmflow
