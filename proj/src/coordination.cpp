#include "flexcoord/coordination.hpp"

#include "flexcoord/parallel.hpp"

#include <algorithm>
#include <set>

namespace flexcoord {

namespace {

Timeseries summed_net(const std::vector<Schedule>& schedules, const std::vector<std::size_t>& which, std::size_t n) {
    Timeseries s(n);
    for (std::size_t u : which) {
        for (std::size_t t = 0; t < n; ++t) s[t] += schedules[u].p_net[t];
    }
    return s;
}

std::vector<std::size_t> all_units(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

Objective root_problem_objective(const Scenario& scenario) {
    if (scenario.root_objective.kind == RootObjective::Kind::TrackDemand) return Tracking{scenario.root_objective.target};
    return FlattenIpf{scenario.baseline_ipf};
}

void require_solved(const DispatchSolution& s, const std::string& where) {
    if (s.status == SolveStatus::Infeasible) throw SolverError(where + ": constraints are infeasible");
}

}  // namespace

void validate_scenario(const Scenario& scenario) {
    validate_grid(scenario.grid);
    validate_options(scenario.solver);
    require_series(scenario.baseline_ipf, scenario.grid, "baseline ipf");
    std::set<std::string> ids;
    for (const auto& u : scenario.units) {
        require_valid(u);
        if (u.id.empty()) throw InputError("unit id must not be empty");
        if (!ids.insert(u.id).second) throw InputError("duplicate unit id '" + u.id + "'");
    }
    if (scenario.root_objective.kind == RootObjective::Kind::TrackDemand) {
        require_series(scenario.root_objective.target, scenario.grid, "root tracking target");
    }
    for (const auto& [node, bound] : scenario.ipf_constraints) require_series(bound, scenario.grid, "ipf constraint of '" + node + "'");
    if (scenario.units.empty()) {
        if (!scenario.ipf_constraints.empty()) throw InputError("ipf constraints require units");
        return;
    }
    const AggregatorTree tree = scenario_tree(scenario);
    (void)tree;
}

std::vector<std::vector<std::size_t>> scenario_groups(const Scenario& scenario) {
    if (scenario.explicit_groups) return *scenario.explicit_groups;
    return partition(scenario.units, scenario.mode, scenario.group_count);
}

AggregatorTree scenario_tree(const Scenario& scenario) {
    AggregatorTree tree = build_tree(scenario.units, scenario_groups(scenario), scenario.nesting);
    for (const auto& [node, bound] : scenario.ipf_constraints) {
        const auto idx = tree.find(node);
        if (!idx) throw InputError("ipf constraint references unknown aggregator '" + node + "'");
        tree.nodes[*idx].ipf_constraint = bound;
    }
    return tree;
}

double root_objective_value(const Scenario& scenario, const Timeseries& ipf) {
    double f = 0.0;
    for (std::size_t t = 0; t < ipf.size(); ++t) {
        double r = ipf[t];
        if (scenario.root_objective.kind == RootObjective::Kind::TrackDemand) {
            // target - flex, flex = -(ipf - baseline)
            r = scenario.root_objective.target[t] + (ipf[t] - scenario.baseline_ipf[t]);
        }
        f += r * r;
    }
    return f;
}

RunMode parse_run_mode(const std::string& text) {
    if (text == "monolithic") return RunMode::Monolithic;
    if (text == "hierarchical") return RunMode::Hierarchical;
    if (text == "both") return RunMode::Both;
    throw InputError("unknown mode '" + text + "' (expected monolithic, hierarchical or both)");
}

NodeDispatch disaggregate_node(const AggregatorTree& tree, std::size_t node, const Timeseries& request,
                               const TimeGrid& grid, const SolverOptions& options) {
    require_series(request, grid, "request of '" + tree.nodes[node].id + "'");
    DispatchProblem problem;
    problem.grid = grid;
    problem.units = tree.child_params(node);
    problem.objective = Tracking{request};
    problem.options = options;
    if (tree.nodes[node].ipf_constraint) problem.coupling.push_back({{}, *tree.nodes[node].ipf_constraint});

    NodeDispatch out;
    out.solution = solve(problem);
    require_solved(out.solution, "aggregator '" + tree.nodes[node].id + "'");
    for (const auto& s : out.solution.schedules) out.child_requests.push_back(-s.p_net);
    out.delivered = -out.solution.summed_net;
    return out;
}

RunResult run_monolithic(const Scenario& scenario) {
    validate_scenario(scenario);
    RunResult r;
    r.has_monolithic = true;
    r.ipf_baseline = scenario.baseline_ipf;
    for (const auto& u : scenario.units) r.unit_ids.push_back(u.id);
    if (scenario.units.empty()) {
        r.ipf_monolithic = scenario.baseline_ipf;
        r.metrics.objective_monolithic = root_objective_value(scenario, r.ipf_monolithic);
        return r;
    }

    DispatchProblem problem;
    problem.grid = scenario.grid;
    problem.units = scenario.units;
    problem.objective = root_problem_objective(scenario);
    problem.options = scenario.solver;
    if (!scenario.ipf_constraints.empty()) {
        // full information includes every aggregator's constraint on its leaves
        const AggregatorTree tree = scenario_tree(scenario);
        for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
            if (tree.nodes[n].ipf_constraint) problem.coupling.push_back({tree.leaves(n), *tree.nodes[n].ipf_constraint});
        }
    }
    DispatchSolution sol = solve(problem);
    require_solved(sol, "monolithic dispatch");
    r.ipf_monolithic = scenario.baseline_ipf + sol.summed_net;
    r.monolithic_schedules = std::move(sol.schedules);
    r.monolithic_status = sol.status;
    r.monolithic_stats = sol.stats;
    r.metrics.objective_monolithic = root_objective_value(scenario, r.ipf_monolithic);
    return r;
}

RunResult run_hierarchical(const Scenario& scenario) {
    validate_scenario(scenario);
    RunResult r;
    r.has_hierarchical = true;
    r.ipf_baseline = scenario.baseline_ipf;
    for (const auto& u : scenario.units) r.unit_ids.push_back(u.id);
    const std::size_t n = scenario.grid.n_steps;
    if (scenario.units.empty()) {
        r.ipf_hier_planned = scenario.baseline_ipf;
        r.ipf_hier_realized = scenario.baseline_ipf;
        r.metrics.objective_hierarchical = root_objective_value(scenario, r.ipf_hier_realized);
        r.metrics.objective_hier_planned = r.metrics.objective_hierarchical;
        return r;
    }

    const AggregatorTree tree = scenario_tree(scenario);
    const std::size_t root = tree.root();
    std::vector<AggregatorReport> reports(tree.nodes.size());
    std::vector<std::optional<Timeseries>> requests(tree.nodes.size());
    std::vector<std::optional<Schedule>> leaves(tree.units.size());

    auto settle = [&](std::size_t node, const DispatchSolution& sol) {
        const auto& children = tree.nodes[node].children;
        for (std::size_t k = 0; k < children.size(); ++k) {
            if (children[k].kind == TreeChild::Kind::Unit) leaves[children[k].index] = sol.schedules[k];
            else requests[children[k].index] = -sol.schedules[k].p_net;
        }
        reports[node].status = sol.status;
        reports[node].stats = sol.stats;
    };

    DispatchProblem root_problem;
    root_problem.grid = scenario.grid;
    root_problem.units = tree.child_params(root);
    root_problem.objective = root_problem_objective(scenario);
    root_problem.options = scenario.solver;
    if (tree.root_node().ipf_constraint) root_problem.coupling.push_back({{}, *tree.root_node().ipf_constraint});
    const DispatchSolution root_sol = solve(root_problem);
    require_solved(root_sol, "root aggregator");
    settle(root, root_sol);
    requests[root] = -root_sol.summed_net;
    r.ipf_hier_planned = scenario.baseline_ipf + root_sol.summed_net;

    // Top-down: all aggregators whose request is known are dispatched together.
    std::vector<std::size_t> frontier;
    for (const auto& c : tree.root_node().children) {
        if (c.kind == TreeChild::Kind::Node) frontier.push_back(c.index);
    }
    while (!frontier.empty()) {
        std::vector<NodeDispatch> dispatched(frontier.size());
        parallel_for(frontier.size(), [&](std::size_t i) {
            dispatched[i] = disaggregate_node(tree, frontier[i], *requests[frontier[i]], scenario.grid, scenario.solver);
        });
        std::vector<std::size_t> next;
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            const std::size_t node = frontier[i];
            settle(node, dispatched[i].solution);
            reports[node].solver_objective = dispatched[i].solution.objective_value;
            for (const auto& c : tree.nodes[node].children) {
                if (c.kind == TreeChild::Kind::Node) next.push_back(c.index);
            }
        }
        frontier = std::move(next);
    }

    for (std::size_t u = 0; u < leaves.size(); ++u) r.leaf_schedules.push_back(std::move(*leaves[u]));
    r.ipf_hier_realized = scenario.baseline_ipf + summed_net(r.leaf_schedules, all_units(tree.units.size()), n);

    for (std::size_t node = 0; node < tree.nodes.size(); ++node) {
        AggregatorReport& rep = reports[node];
        rep.id = tree.nodes[node].id;
        rep.requested = *requests[node];
        rep.delivered = -summed_net(r.leaf_schedules, tree.leaves(node), n);
        rep.epsilon = aggregation_error(rep.requested, rep.delivered);
        rep.tracking_objective = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double d = rep.requested[t] - rep.delivered[t];
            rep.tracking_objective += d * d;
        }
        rep.children_are_units = std::all_of(tree.nodes[node].children.begin(), tree.nodes[node].children.end(),
                                             [](const TreeChild& c) { return c.kind == TreeChild::Kind::Unit; });
    }
    r.per_aggregator = std::move(reports);
    r.metrics.epsilon_agg = r.per_aggregator.back().epsilon;
    r.metrics.objective_hierarchical = root_objective_value(scenario, r.ipf_hier_realized);
    r.metrics.objective_hier_planned = root_objective_value(scenario, r.ipf_hier_planned);
    return r;
}

RunResult run(const Scenario& scenario, RunMode mode) {
    if (mode == RunMode::Monolithic) return run_monolithic(scenario);
    if (mode == RunMode::Hierarchical) return run_hierarchical(scenario);

    RunResult mono = run_monolithic(scenario);
    RunResult r = run_hierarchical(scenario);
    r.has_monolithic = true;
    r.ipf_monolithic = std::move(mono.ipf_monolithic);
    r.monolithic_schedules = std::move(mono.monolithic_schedules);
    r.monolithic_status = mono.monolithic_status;
    r.monolithic_stats = mono.monolithic_stats;
    r.metrics.objective_monolithic = mono.metrics.objective_monolithic;

    const std::size_t n = scenario.grid.n_steps;
    const auto units = all_units(scenario.units.size());
    const Timeseries flex_hier = -summed_net(r.leaf_schedules, units, n);
    const Timeseries flex_mono = -summed_net(r.monolithic_schedules, units, n);
    r.metrics.eta_agg = aggregation_efficiency(flex_hier, flex_mono);
    return r;
}

}  // namespace flexcoord
