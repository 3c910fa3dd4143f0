#pragma once

#include "flexcoord/aggregation.hpp"
#include "flexcoord/metrics.hpp"
#include "flexcoord/optimizer.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flexcoord {

/// What the root (or the monolithic coordinator) optimizes.
struct RootObjective {
    enum class Kind { FlattenIpf, TrackDemand };
    Kind kind = Kind::FlattenIpf;
    Timeseries target;  // requested flexibility for TrackDemand
};

struct Scenario {
    std::string name;
    TimeGrid grid;
    std::vector<EssParams> units;
    Timeseries baseline_ipf;
    AggregationMode mode = AggregationMode::AllInOne;
    std::size_t group_count = 1;
    std::optional<std::vector<std::vector<std::size_t>>> explicit_groups;
    std::vector<std::vector<std::size_t>> nesting;
    std::map<std::string, Timeseries> ipf_constraints;  // node id -> bound on summed net power
    RootObjective root_objective;
    SolverOptions solver;
};

void validate_scenario(const Scenario& scenario);

/// Groups used for the hierarchy: explicit groups when given, partition() otherwise.
std::vector<std::vector<std::size_t>> scenario_groups(const Scenario& scenario);

/// Aggregator tree of the scenario with constraints attached and virtual
/// parameters computed.
AggregatorTree scenario_tree(const Scenario& scenario);

struct AggregatorReport {
    std::string id;
    Timeseries requested;  // flexibility requested from this aggregator
    Timeseries delivered;  // flexibility realized by the units below it
    std::optional<double> epsilon;
    double tracking_objective = 0.0;  // sum_t (requested - delivered)^2 from the schedules
    std::optional<double> solver_objective;  // the node's own disaggregation objective
    bool children_are_units = false;
    SolveStatus status = SolveStatus::Optimal;
    SolverStats stats;
};

struct RunResult {
    bool has_monolithic = false;
    bool has_hierarchical = false;

    Timeseries ipf_baseline;
    Timeseries ipf_monolithic;
    Timeseries ipf_hier_planned;
    Timeseries ipf_hier_realized;

    std::vector<AggregatorReport> per_aggregator;  // bottom-up order, root last
    std::vector<Schedule> leaf_schedules;          // hierarchical, unit order
    std::vector<Schedule> monolithic_schedules;    // unit order
    std::vector<std::string> unit_ids;

    SolveStatus monolithic_status = SolveStatus::Optimal;
    SolverStats monolithic_stats;
    Metrics metrics;
};

/// Objective of the scenario's root problem evaluated on an IPF series.
double root_objective_value(const Scenario& scenario, const Timeseries& ipf);

/// One dispatch over all units with full information.
RunResult run_monolithic(const Scenario& scenario);

/// Bottom-up aggregation, root planning over virtual units, then single-pass
/// top-down disaggregation down to the units.
RunResult run_hierarchical(const Scenario& scenario);

enum class RunMode { Monolithic, Hierarchical, Both };

RunMode parse_run_mode(const std::string& text);

/// Runs the requested schemes and fills the metrics.
RunResult run(const Scenario& scenario, RunMode mode = RunMode::Both);

struct NodeDispatch {
    std::vector<Timeseries> child_requests;  // flexibility per child
    Timeseries delivered;                    // summed flexibility of the children
    DispatchSolution solution;
};

/// Tracks `request` (flexibility) with the node's children, honouring the
/// node's constraint on summed net power.
NodeDispatch disaggregate_node(const AggregatorTree& tree, std::size_t node, const Timeseries& request,
                               const TimeGrid& grid, const SolverOptions& options);

}  // namespace flexcoord
