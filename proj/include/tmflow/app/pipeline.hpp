#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmflow/collarflow.hpp"
#include "tmflow/hypgeom.hpp"
#include "tmflow/ricci.hpp"
#include "tmflow/singular.hpp"
#include "tmflow/torusflow.hpp"

namespace tmflow::app {

using json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

struct TorusSetup {
    FlowConfig flow;
    std::string preset = "wrap-perturbed";  // constant | wrap | wrap-perturbed | custom
    double amplitude = 0.05;
    TorusModulus modulus;
    std::string grid_file;  // snapshot used by the "custom" preset
};

struct RicciSetup {
    int punctures = 3;
    double cap = 64.0;
    std::size_t ntheta = 64;
    std::size_t nphi = 128;
    RicciConfig run;
};

struct AnalysisOptions {
    double eps0 = 1.0;
    std::vector<double> ladder = {0.2, 0.1, 0.05};
    std::size_t m = 5;
    double K = 10.0;
    std::vector<double> delta_ladder;  // empty selects a default per geometry
    ExtractOptions extract;
    BranchOptions branch;
    double T = -1.0;  // singular time; negative lets the analysis infer it
};

struct RunConfig {
    std::string scenario;  // torus | collar | ricci
    std::string output_dir = "tmflow_out";
    std::uint64_t seed = 1;
    std::size_t snapshot_every = 0;
    TorusSetup torus;
    CollarConfig collar;
    RicciSetup ricci;
    AnalysisOptions analysis;
    // limit surface for collar pipelines; every collar is assumed to follow the simulated one
    int genus = 2;
    int k = 1;
    std::vector<SurfaceTopology> components = {{1, 2, 1}};
};

// Parses and validates; throws ConfigError listing every violated precondition.
RunConfig parse_run_config(const json& j);
RunConfig load_run_config(const std::string& path);

// Runs the configured flow and writes history, snapshots and a report to
// output_dir. Returns the report that was written.
json run(const RunConfig& cfg);

// Singular-set analysis of stored artifacts. Writes analysis.json and
// osc_profile.csv into out_dir and returns the report.
json analyze(const std::string& history_path, const std::string& snapshot_dir, bool cylinder,
             const AnalysisOptions& opt, const std::string& out_dir);

// End-to-end decomposition: flow, singular analysis at the stop event and
// Ricci continuation on punctured-sphere components.
json pipeline(const RunConfig& cfg);

// Ricci run from capped cusped data, writing ricci.csv and ricci_report.json.
json run_ricci_scenario(const RicciSetup& setup, const std::string& out_dir);

// Worker count from TMFLOW_THREADS (default: hardware concurrency, at least 1).
unsigned worker_threads();

}  // namespace tmflow::app
