#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "tmflow/app/pipeline.hpp"
#include "tmflow/error.hpp"
#include "tmflow/hypgeom.hpp"
#include "tmflow/io.hpp"

namespace {

using tmflow::app::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

void print_summary(const json& rep) {
    json brief = json::object();
    for (const char* key : {"kind", "scenario", "status", "final_time", "failed_stage", "error"})
        if (rep.contains(key)) brief[key] = rep.at(key);
    std::cout << brief.dump() << '\n';
}

tmflow::app::RunConfig load_with_scenario(const std::string& path, const char* forced) {
    auto cfg = tmflow::app::load_run_config(path);
    if (forced && cfg.scenario != forced)
        throw tmflow::ConfigError({std::string("scenario must be \"") + forced + "\" for this subcommand"});
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled harmonic map / Teichmueller flow toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run a configured flow and write history, snapshots and report");
    run_cmd->add_option("--config", config_path, "JSON run configuration")->required();

    std::string collar_config;
    auto* collar_cmd = app.add_subcommand("run-collar", "Run the collar flow (scenario \"collar\")");
    collar_cmd->add_option("--config", collar_config, "JSON run configuration")->required();

    std::string history_path, snapshot_dir, analyze_out = "tmflow_analysis", analysis_config;
    bool collar = false;
    std::optional<double> singular_time;
    auto* analyze_cmd = app.add_subcommand("analyze", "Singular-set analysis of stored run artifacts");
    analyze_cmd->add_option("--history", history_path, "history CSV")->required();
    analyze_cmd->add_option("--snapshots", snapshot_dir, "directory of snapshot files")->required();
    analyze_cmd->add_flag("--collar", collar, "snapshots hold cylinder data");
    analyze_cmd->add_option("--out", analyze_out, "output directory");
    analyze_cmd->add_option("--T", singular_time, "singular time (inferred when omitted)");
    analyze_cmd->add_option("--config", analysis_config, "JSON configuration whose analysis block is used");

    std::string pipeline_config;
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Flow, singular analysis and continuation");
    pipeline_cmd->add_option("--config", pipeline_config, "JSON run configuration")->required();

    std::vector<double> ells, deltas;
    auto* table_cmd = app.add_subcommand("collar-table", "Collar geometry table as CSV on stdout");
    table_cmd->add_option("--ell", ells, "geodesic lengths")->required()->delimiter(',');
    table_cmd->add_option("--delta", deltas, "thin-part thresholds")->required()->delimiter(',');

    std::optional<int> punctures;
    std::optional<double> cap;
    std::string ricci_config, ricci_out;
    auto* ricci_cmd = app.add_subcommand("ricci", "Ricci flow from capped cusped data on the punctured sphere");
    ricci_cmd->add_option("--punctures", punctures, "number of cusps (at least 3)");
    ricci_cmd->add_option("--cap", cap, "cap on the conformal factor (at least 20)");
    ricci_cmd->add_option("--config", ricci_config, "JSON configuration whose ricci block is used");
    ricci_cmd->add_option("--out", ricci_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*run_cmd) {
            print_summary(tmflow::app::run(load_with_scenario(config_path, nullptr)));
        } else if (*collar_cmd) {
            print_summary(tmflow::app::run(load_with_scenario(collar_config, "collar")));
        } else if (*analyze_cmd) {
            tmflow::app::AnalysisOptions opt;
            if (!analysis_config.empty()) opt = tmflow::app::load_run_config(analysis_config).analysis;
            if (singular_time) {
                if (!(*singular_time > 0.0)) throw tmflow::ConfigError({"--T must be positive"});
                opt.T = *singular_time;
            }
            const json rep = tmflow::app::analyze(history_path, snapshot_dir, collar, opt, analyze_out);
            json brief = {{"kind", "analysis"},
                          {"concentration_points", rep["concentration_points"].size()},
                          {"candidates", rep["candidates"].size()},
                          {"out", analyze_out}};
            std::cout << brief.dump() << '\n';
        } else if (*pipeline_cmd) {
            const json rep = tmflow::app::pipeline(load_with_scenario(pipeline_config, nullptr));
            print_summary(rep);
            if (!rep["failed_stage"].is_null()) {
                std::cerr << "pipeline stage '" << rep["failed_stage"].get<std::string>()
                          << "' failed: " << rep["error"].get<std::string>() << '\n';
                return rep["error_kind"] == "domain" ? kExitFailure : kExitAbort;
            }
        } else if (*table_cmd) {
            std::cout << tmflow::collar_table_csv(tmflow::collar_table(ells, deltas));
        } else if (*ricci_cmd) {
            tmflow::app::RunConfig cfg;
            cfg.scenario = "ricci";
            if (!ricci_config.empty()) cfg = tmflow::app::load_run_config(ricci_config);
            json overrides = json::object();
            if (punctures) overrides["punctures"] = *punctures;
            if (cap) overrides["cap"] = *cap;
            if (!overrides.empty()) {
                json j = {{"scenario", "ricci"}, {"ricci", overrides}};
                const auto checked = tmflow::app::parse_run_config(j).ricci;
                if (punctures) cfg.ricci.punctures = checked.punctures;
                if (cap) cfg.ricci.cap = checked.cap;
            }
            const std::string out = ricci_out.empty() ? cfg.output_dir : ricci_out;
            const json rep = tmflow::app::run_ricci_scenario(cfg.ricci, out);
            std::cout << json{{"kind", "ricci"},
                              {"status", rep["run"]["status"]},
                              {"T_pred", rep["report"]["T_pred"]},
                              {"out", out}}
                             .dump()
                      << '\n';
        }
    } catch (const tmflow::ConfigError& e) {
        std::cerr << "configuration error:\n";
        for (const auto& v : e.violations()) std::cerr << "  - " << v << '\n';
        return kExitConfig;
    } catch (const tmflow::NumericalAbort& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return kExitAbort;
    } catch (const tmflow::DomainError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitOk;
}
