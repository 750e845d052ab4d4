#pragma once

#include "evofam/kernels.hpp"
#include "evofam/models.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace evofam {

using Json = nlohmann::ordered_json;

/// One requested check with its expected verdict (a scenario passes when
/// every check lands on its expectation, so known failures are assertable).
struct CheckRequest {
    std::string name;
    Verdict expect = Verdict::Holds;
    Json params;
};

/// Parsed scenario file (schema_version 1).
struct Scenario {
    int schema_version = 1;
    std::string name;
    std::string description;
    std::uint64_t seed = 1;
    double horizon = 1.0;
    double tolerance = 1e-8;
    double runtime_budget_seconds = 120.0;
    int grid_points = 10;
    Json model;
    std::vector<CheckRequest> checks;
    std::string output_dir = "out";
};

Scenario parse_scenario(const Json& j);
Scenario load_scenario_file(const std::string& path);

/// Model construction from the scenario's "model" object. The optional
/// domination reference (dominating model plus index map) is resolved by the
/// runner on demand.
OperatorPath build_model(const Json& model_spec, double horizon);

struct RunResult {
    int exit_code = 0;  // 0 pass, 2 check failed
    Json report;        // deterministic given the seed (no timestamps)
    std::string summary;
    double elapsed_seconds = 0.0;
    std::vector<std::pair<std::string, std::string>> csv_files;  // name -> content
};

RunResult run_scenario(const Scenario& scenario);

/// Writes report.json, summary.txt, bound-curve CSVs and run_meta.json
/// (wall-clock data lives only in run_meta.json).
void write_report_bundle(const RunResult& result, const Scenario& scenario,
                         const std::string& out_dir);

/// Bundled scenario names with their embedded JSON sources.
const std::vector<std::pair<std::string, std::string>>& bundled_scenarios();

/// Scenario text by bundled name or by file path.
Scenario resolve_scenario(const std::string& name_or_path);

/// Human-readable description of a named check, with its defining bound.
/// Throws ValidationError listing near matches for unknown names.
std::string describe_check(const std::string& name);

std::vector<std::string> known_checks();

Json report_to_json(const PropertyReport& rep);
Json fit_to_json(const KernelBoundFit& fit);

}  // namespace evofam
