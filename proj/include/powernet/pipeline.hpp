#pragma once

#include <optional>
#include <string>

#include "powernet/exactness.hpp"
#include "powernet/oracle.hpp"
#include "powernet/scenarios.hpp"

namespace powernet {

/// Exit codes of the pipeline entry points.
enum ExitCode : int {
    kExitExact = 0,
    kExitInexact = 10,
    kExitRequirementFailure = 20,
    kExitSolverFailure = 30,
    kExitUsage = 64,
};

enum class ScenarioType { EcoDriving, Cvem, Custom };

/// Parsed scenario file (schema_version 1). Every physical block carries a
/// mandatory "unit": "SI" marker.
struct Scenario {
    ScenarioType type = ScenarioType::EcoDriving;
    std::string name;

    // eco_driving
    VehicleParams vehicle;
    EcoBounds bounds;
    std::optional<std::string> route_file;
    std::optional<HillSpec> route_hill;
    double route_length = 0.0;
    double t_max = 0.0;

    // cvem
    CvemParams cvem;

    // custom: built eagerly at parse time
    std::optional<NetworkProblem> custom;
    int custom_horizon = 0;

    SolverSettings solver;
    ExactnessOptions exactness;
    std::uint64_t seed = 0;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text, const std::string& base_dir);

/// Route CSV with mandatory header "s_m,grade_rad".
Route load_route_csv(const std::string& path, double delta_s);
void write_route_csv(const Route& r, const std::string& path);

struct RunOptions {
    std::string out_dir = "out";
    int case_id = 0;        ///< 0 = generic exactness loop; 1..3 = study cases
    double sigma = 0.01;    ///< case-3 weight on the lethargy outputs
    bool timings = false;   ///< include wall times in summary.json
    bool force = false;     ///< run even if requirement checks fail
    bool quiet = false;
};

struct RunArtifacts {
    int exit_code = kExitUsage;
    std::string summary_json;
    double cost = 0.0;
    double base_cost = 0.0;
    double max_rel_residual = 0.0;
    ExactnessReport report;
};

/// check -> relax -> solve -> audit -> (regularize) -> artifacts.
RunArtifacts run_scenario(const Scenario& sc, const RunOptions& opts);

/// Requirement verification only; writes report.json into out_dir.
int check_scenario(const Scenario& sc, const std::string& out_dir, std::string* summary = nullptr);

struct OracleOptions {
    int state_points = 200;
    int input_points = 120;
    int horizon = -1;  ///< override (desk scale); -1 = scenario horizon
    std::string out_dir = "out";
};

/// DP-vs-relaxation comparison table; returns 0 on success.
int oracle_scenario(const Scenario& sc, const OracleOptions& opts, std::string* summary = nullptr);

/// Rebuilds the problem of a scenario (shared by the subcommands).
NetworkProblem build_problem(const Scenario& sc, EcoHandles* eco = nullptr,
                             CvemHandles* cvem = nullptr);

/// Reads POWERNET_SEED (decimal) or returns fallback.
std::uint64_t env_seed(std::uint64_t fallback = 0);

}  // namespace powernet
