#pragma once

#include "flexcoord/core.hpp"
#include "flexcoord/qp.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace flexcoord {

/// Follow a requested flexibility series: minimize sum_t (target_t - flex_t)^2
/// where flex is the negated summed net power of the units.
struct Tracking {
    Timeseries target;
};

/// Flatten the interconnection power flow: minimize sum_t (baseline_t + net_t)^2.
struct FlattenIpf {
    Timeseries baseline;
};

using Objective = std::variant<Tracking, FlattenIpf>;

/// Upper bound on the summed net power of a subset of units. An empty
/// `units` list means all units of the problem.
struct CouplingConstraint {
    std::vector<std::size_t> units;
    Timeseries bound;
};

enum class RelaxationMode { Auto, Always, Never };

struct SolverOptions {
    double rel_opt_tol = 1e-6;
    double abs_feas_tol = 1e-8;
    int max_bnb_nodes = 10000;
    RelaxationMode relaxation = RelaxationMode::Auto;
    double regularization = 1e-6;
};

void validate_options(const SolverOptions& options);

struct DispatchProblem {
    TimeGrid grid;
    std::vector<EssParams> units;
    Objective objective = FlattenIpf{};
    std::vector<CouplingConstraint> coupling;
    SolverOptions options;
};

/// Throws InputError unless the problem is well formed.
void validate_problem(const DispatchProblem& problem);

enum class SolveStatus { Optimal, NodeLimit, Infeasible };

const char* to_string(SolveStatus status);

struct SolverStats {
    int qp_solves = 0;
    int qp_iterations = 0;
    int bnb_nodes = 0;
    double regularized_objective = 0.0;
    qp::Certificate certificate;
};

struct DispatchSolution {
    std::vector<Schedule> schedules;
    double objective_value = 0.0;
    SolveStatus status = SolveStatus::Optimal;
    Timeseries summed_net;
    SolverStats stats;
};

/// Minimizes the problem objective (plus a small tie-breaking penalty on
/// charge and discharge powers) subject to the unit models and coupling
/// bounds. Charge/discharge exclusivity is handled by branch-and-bound over
/// the convex relaxation unless the relaxation is exact (all efficiencies 1).
DispatchSolution solve(const DispatchProblem& problem);

/// The problem objective without the tie-breaking penalty.
double evaluate_objective(const DispatchProblem& problem, const std::vector<Schedule>& schedules);

/// Offset series c such that the objective equals sum_t (c_t + sum_u net_t,u)^2.
Timeseries objective_offset(const Objective& objective);

struct OracleResult {
    double objective = 0.0;
    std::vector<Timeseries> net;  // per unit
    std::size_t feasible_points = 0;
};

/// Exhaustive search over per-step net powers on a uniform grid of `levels`
/// points in [-p_max, p_max] per unit. Limited to 2 units, 3 steps, 21 levels.
OracleResult brute_force_oracle(const DispatchProblem& problem, int levels);

}  // namespace flexcoord
