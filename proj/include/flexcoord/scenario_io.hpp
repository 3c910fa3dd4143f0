#pragma once

#include "flexcoord/coordination.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace flexcoord {

/// Failure to write an output file or directory.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A scenario file after parsing. `defaults` lists every setting that was
/// not given in the file, as "key = value" lines for the run log.
struct LoadedScenario {
    Scenario scenario;
    std::optional<std::filesystem::path> output_dir;
    std::vector<std::string> defaults;
};

/// Reads a TOML scenario. Relative CSV paths resolve against the file's
/// directory. Unknown keys are rejected. Throws InputError.
LoadedScenario load_scenario(const std::filesystem::path& path);
LoadedScenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir,
                              const std::string& source_name = "<string>");

/// Fully resolved scenario as TOML: every default written out and every
/// series inlined, so loading it reproduces the run exactly.
std::string scenario_to_toml(const Scenario& scenario);

/// CSV with header `t,p_mw`, one row per step in order; `#` lines are comments.
Timeseries load_timeseries_csv(const std::filesystem::path& path, const TimeGrid& grid);
Timeseries parse_timeseries_csv(const std::string& text, const TimeGrid& grid, const std::string& source_name);
void write_timeseries_csv(const std::filesystem::path& path, const Timeseries& series);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

const char* to_string(RelaxationMode mode);
RelaxationMode parse_relaxation_mode(const std::string& text);
const char* to_string(RunMode mode);

/// Writes ipf.csv, schedules.csv (plus schedules_monolithic.csv for "both"),
/// metrics.json and scenario.resolved.toml into `dir`, creating it.
void write_results(const RunResult& result, const Scenario& scenario, RunMode mode, const std::filesystem::path& dir);

std::string metrics_json(const RunResult& result, const Scenario& scenario, RunMode mode);

/// Capacity distribution sweep: in every group unit 1 gets (p1, c1) and
/// unit 2 the rest of the group totals.
struct SweepSpec {
    double total_mw = 2.0;   // per group
    double total_mwh = 2.0;  // per group
    std::vector<double> p1_values{0.5, 0.75, 1.0};
    double c1_min = 0.05;
    double c1_max = 1.95;
    std::size_t steps = 39;
    std::vector<std::filesystem::path> demand_variants;  // empty: the scenario's own demand
};

SweepSpec load_sweep_spec(const std::filesystem::path& path);
SweepSpec parse_sweep_spec(const std::string& text, const std::filesystem::path& base_dir,
                           const std::string& source_name = "<string>");

/// Sample points of c1, evenly spaced over [c1_min, c1_max].
std::vector<double> sweep_c1_values(const SweepSpec& spec);

struct SweepRow {
    std::string demand;
    double c1 = 0.0;
    double p1 = 0.0;
    std::optional<double> epsilon;
    std::optional<double> eta;
    double objective_monolithic = 0.0;
    double objective_hierarchical = 0.0;
};

/// Rows ordered by demand variant, then p1, then c1. Independent points may
/// run in parallel; the order never depends on completion order.
std::vector<SweepRow> run_sweep(const Scenario& base, const SweepSpec& spec);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

struct DemandStudyRow {
    std::string demand;
    std::optional<double> epsilon;
    std::optional<double> eta;
    double objective_baseline = 0.0;
    double objective_monolithic = 0.0;
    double objective_hierarchical = 0.0;
};

/// Runs the scenario once per demand series (replacing its baseline) and
/// writes each run's results into `dir`/<name>/ plus a summary table.
std::vector<DemandStudyRow> run_demand_study(const Scenario& base, const std::vector<std::filesystem::path>& demands,
                                             const std::filesystem::path& dir);

}  // namespace flexcoord
