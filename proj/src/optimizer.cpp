#include "flexcoord/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

namespace flexcoord {

namespace {

enum Fixing : std::uint8_t { kFree = 0, kNoCharge = 1, kNoDischarge = 2 };

struct Layout {
    std::size_t units = 0;
    std::size_t steps = 0;
    std::size_t groups = 0;
    bool phase1 = false;

    std::size_t pc(std::size_t u, std::size_t t) const { return u * 3 * steps + t; }
    std::size_t pd(std::size_t u, std::size_t t) const { return u * 3 * steps + steps + t; }
    std::size_t energy(std::size_t u, std::size_t i) const { return u * 3 * steps + 2 * steps + (i - 1); }
    std::size_t sum(std::size_t t) const { return units * 3 * steps + t; }
    std::size_t coupled(std::size_t k, std::size_t t) const {
        return units * 3 * steps + (phase1 ? 0 : steps) + k * steps + t;
    }
    std::size_t violation(std::size_t k, std::size_t t) const { return coupled(groups, 0) + k * steps + t; }
    std::size_t n_vars() const {
        return units * 3 * steps + (phase1 ? 0 : steps) + groups * steps * (phase1 ? 2 : 1);
    }

    std::size_t dynamics_row(std::size_t u, std::size_t i) const { return u * steps + (i - 1); }
    std::size_t sum_row(std::size_t t) const { return units * steps + t; }
    std::size_t coupled_row(std::size_t k, std::size_t t) const {
        return units * steps + (phase1 ? 0 : steps) + k * steps + t;
    }
    std::size_t n_rows() const { return units * steps + (phase1 ? 0 : steps) + groups * steps; }
};

std::vector<std::size_t> members(const CouplingConstraint& c, std::size_t n_units) {
    if (!c.units.empty()) return c.units;
    std::vector<std::size_t> all(n_units);
    for (std::size_t u = 0; u < n_units; ++u) all[u] = u;
    return all;
}

qp::BoxQp build_qp(const DispatchProblem& problem, const std::vector<std::uint8_t>& fixings, bool phase1,
                   const Timeseries& offset) {
    Layout lay{problem.units.size(), problem.grid.n_steps, problem.coupling.size(), phase1};
    const std::size_t n = lay.n_vars();
    const double dt = problem.grid.dt_hours;
    const double reg = 2.0 * problem.options.regularization;

    qp::BoxQp q;
    q.hessian.assign(n, 0.0);
    q.linear.assign(n, 0.0);
    q.lower.assign(n, -qp::kInf);
    q.upper.assign(n, qp::kInf);
    q.eq_rhs.assign(lay.n_rows(), 0.0);
    std::vector<Eigen::Triplet<double>> trip;

    for (std::size_t u = 0; u < lay.units; ++u) {
        const EssParams& p = problem.units[u];
        for (std::size_t t = 0; t < lay.steps; ++t) {
            const std::uint8_t fix = fixings.empty() ? std::uint8_t{kFree} : fixings[u * lay.steps + t];
            q.hessian[lay.pc(u, t)] = reg;
            q.hessian[lay.pd(u, t)] = reg;
            q.lower[lay.pc(u, t)] = 0.0;
            q.lower[lay.pd(u, t)] = 0.0;
            q.upper[lay.pc(u, t)] = fix == kNoCharge ? 0.0 : p.p_max;
            q.upper[lay.pd(u, t)] = fix == kNoDischarge ? 0.0 : p.p_max;

            const std::size_t i = t + 1;
            const auto row = static_cast<int>(lay.dynamics_row(u, i));
            q.lower[lay.energy(u, i)] = 0.0;
            q.upper[lay.energy(u, i)] = p.capacity;
            trip.emplace_back(row, static_cast<int>(lay.energy(u, i)), 1.0);
            if (i > 1) trip.emplace_back(row, static_cast<int>(lay.energy(u, i - 1)), -1.0);
            else q.eq_rhs[static_cast<std::size_t>(row)] = p.energy_initial();
            trip.emplace_back(row, static_cast<int>(lay.pc(u, t)), -dt * p.eta_chg);
            trip.emplace_back(row, static_cast<int>(lay.pd(u, t)), dt / p.eta_dch);
        }
    }

    auto net_terms = [&](int row, std::size_t u, std::size_t t) {
        trip.emplace_back(row, static_cast<int>(lay.pc(u, t)), -1.0);
        trip.emplace_back(row, static_cast<int>(lay.pd(u, t)), 1.0);
    };

    if (!phase1) {
        for (std::size_t t = 0; t < lay.steps; ++t) {
            const auto row = static_cast<int>(lay.sum_row(t));
            trip.emplace_back(row, static_cast<int>(lay.sum(t)), 1.0);
            for (std::size_t u = 0; u < lay.units; ++u) net_terms(row, u, t);
            q.hessian[lay.sum(t)] = 2.0;
            q.linear[lay.sum(t)] = 2.0 * offset[t];
        }
    }
    for (std::size_t k = 0; k < lay.groups; ++k) {
        const auto& c = problem.coupling[k];
        const auto units = members(c, lay.units);
        for (std::size_t t = 0; t < lay.steps; ++t) {
            const auto row = static_cast<int>(lay.coupled_row(k, t));
            trip.emplace_back(row, static_cast<int>(lay.coupled(k, t)), 1.0);
            q.upper[lay.coupled(k, t)] = c.bound[t];
            if (phase1) {
                trip.emplace_back(row, static_cast<int>(lay.violation(k, t)), 1.0);
                q.lower[lay.violation(k, t)] = 0.0;
                q.hessian[lay.violation(k, t)] = 2.0;
            }
            for (std::size_t u : units) net_terms(row, u, t);
        }
    }

    q.eq_matrix.resize(static_cast<Eigen::Index>(lay.n_rows()), static_cast<Eigen::Index>(n));
    q.eq_matrix.setFromTriplets(trip.begin(), trip.end());
    q.eq_matrix.makeCompressed();
    return q;
}

struct Candidate {
    std::vector<Timeseries> pc;
    std::vector<Timeseries> pd;
};

Candidate extract(const DispatchProblem& problem, const std::vector<double>& x, double zero_tol) {
    Layout lay{problem.units.size(), problem.grid.n_steps, problem.coupling.size(), false};
    Candidate c;
    for (std::size_t u = 0; u < lay.units; ++u) {
        Timeseries pc(lay.steps), pd(lay.steps);
        const double pmax = problem.units[u].p_max;
        for (std::size_t t = 0; t < lay.steps; ++t) {
            pc[t] = std::clamp(x[lay.pc(u, t)], 0.0, pmax);
            pd[t] = std::clamp(x[lay.pd(u, t)], 0.0, pmax);
            if (pc[t] <= zero_tol) pc[t] = 0.0;
            if (pd[t] <= zero_tol) pd[t] = 0.0;
        }
        c.pc.push_back(std::move(pc));
        c.pd.push_back(std::move(pd));
    }
    return c;
}

// Replaces simultaneous charge and discharge by their net.
void net_out(Candidate& c, double zero_tol) {
    for (std::size_t u = 0; u < c.pc.size(); ++u) {
        for (std::size_t t = 0; t < c.pc[u].size(); ++t) {
            const double m = std::min(c.pc[u][t], c.pd[u][t]);
            if (m > 0.0) {
                c.pc[u][t] -= m;
                c.pd[u][t] -= m;
                if (c.pc[u][t] < c.pd[u][t]) c.pc[u][t] = 0.0;
                else c.pd[u][t] = 0.0;
            }
            if (c.pc[u][t] <= zero_tol) c.pc[u][t] = 0.0;
            if (c.pd[u][t] <= zero_tol) c.pd[u][t] = 0.0;
        }
    }
}

struct Branch {
    std::size_t unit = 0;
    std::size_t step = 0;
    double overlap = 0.0;
};

Branch most_overlapping(const Candidate& c) {
    Branch b;
    for (std::size_t u = 0; u < c.pc.size(); ++u) {
        for (std::size_t t = 0; t < c.pc[u].size(); ++t) {
            const double m = std::min(c.pc[u][t], c.pd[u][t]);
            if (m > b.overlap) b = {u, t, m};
        }
    }
    return b;
}

double penalty(const Candidate& c, double lambda) {
    double s = 0.0;
    for (std::size_t u = 0; u < c.pc.size(); ++u) {
        for (std::size_t t = 0; t < c.pc[u].size(); ++t) s += c.pc[u][t] * c.pc[u][t] + c.pd[u][t] * c.pd[u][t];
    }
    return lambda * s;
}

struct Evaluated {
    std::vector<Schedule> schedules;
    double objective = 0.0;
    double regularized = 0.0;
    bool feasible = false;
};

bool coupling_satisfied(const DispatchProblem& problem, const std::vector<Schedule>& schedules, double tol) {
    for (const auto& c : problem.coupling) {
        const auto units = members(c, problem.units.size());
        for (std::size_t t = 0; t < problem.grid.n_steps; ++t) {
            double s = 0.0;
            for (std::size_t u : units) s += schedules[u].p_net[t];
            if (s > c.bound[t] + tol) return false;
        }
    }
    return true;
}

Evaluated evaluate(const DispatchProblem& problem, const Candidate& c) {
    Evaluated e;
    e.feasible = true;
    for (std::size_t u = 0; u < problem.units.size(); ++u) {
        e.schedules.push_back(make_schedule(problem.units[u], problem.grid, c.pc[u], c.pd[u]));
        if (!check_feasibility(problem.units[u], problem.grid, e.schedules.back(), 1e-6).empty()) e.feasible = false;
    }
    if (e.feasible) e.feasible = coupling_satisfied(problem, e.schedules, 1e-6);
    e.objective = evaluate_objective(problem, e.schedules);
    e.regularized = e.objective + penalty(c, problem.options.regularization);
    return e;
}

bool lex_less(const std::vector<Schedule>& a, const std::vector<Schedule>& b) {
    for (std::size_t u = 0; u < a.size(); ++u) {
        for (std::size_t t = 0; t < a[u].p_net.size(); ++t) {
            if (a[u].p_net[t] != b[u].p_net[t]) return a[u].p_net[t] < b[u].p_net[t];
        }
    }
    return false;
}

bool all_unit_efficiency(const DispatchProblem& problem) {
    return std::all_of(problem.units.begin(), problem.units.end(),
                       [](const EssParams& p) { return p.eta_chg == 1.0 && p.eta_dch == 1.0; });
}

qp::Settings qp_settings(const SolverOptions&) { return qp::Settings{}; }

// Largest coupling violation that cannot be avoided; zero when feasible.
double coupling_infeasibility(const DispatchProblem& problem, SolverStats& stats) {
    const qp::BoxQp q = build_qp(problem, {}, true, Timeseries(problem.grid.n_steps));
    const qp::Result r = qp::solve(q, qp_settings(problem.options));
    ++stats.qp_solves;
    stats.qp_iterations += r.iterations;
    Layout lay{problem.units.size(), problem.grid.n_steps, problem.coupling.size(), true};
    double worst = 0.0;
    for (std::size_t k = 0; k < lay.groups; ++k) {
        for (std::size_t t = 0; t < lay.steps; ++t) worst = std::max(worst, r.x[lay.violation(k, t)]);
    }
    return worst;
}

struct Node {
    double bound = 0.0;
    std::size_t id = 0;
    std::vector<std::uint8_t> fixings;
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.id > b.id;
    }
};

}  // namespace

void validate_options(const SolverOptions& options) {
    if (!(options.rel_opt_tol > 0.0)) throw InputError("solver: rel_opt_tol must be > 0");
    if (!(options.abs_feas_tol > 0.0)) throw InputError("solver: abs_feas_tol must be > 0");
    if (options.max_bnb_nodes < 1) throw InputError("solver: max_bnb_nodes must be >= 1");
    if (!(options.regularization >= 0.0)) throw InputError("solver: regularization must be >= 0");
}

void validate_problem(const DispatchProblem& problem) {
    validate_grid(problem.grid);
    validate_options(problem.options);
    if (problem.units.empty()) throw InputError("dispatch problem: at least one unit required");
    for (const auto& u : problem.units) require_valid(u);
    require_series(objective_offset(problem.objective), problem.grid,
                   std::holds_alternative<Tracking>(problem.objective) ? "tracking target" : "ipf baseline");
    for (const auto& c : problem.coupling) {
        require_series(c.bound, problem.grid, "coupling bound");
        for (std::size_t u : c.units) {
            if (u >= problem.units.size()) throw InputError("coupling constraint references unknown unit");
        }
    }
}

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::NodeLimit: return "node_limit";
        case SolveStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

Timeseries objective_offset(const Objective& objective) {
    // Tracking: target - flex = target + net. Flattening: baseline + net.
    return std::visit([](const auto& o) -> Timeseries {
        if constexpr (std::is_same_v<std::decay_t<decltype(o)>, Tracking>) return o.target;
        else return o.baseline;
    }, objective);
}

double evaluate_objective(const DispatchProblem& problem, const std::vector<Schedule>& schedules) {
    const Timeseries offset = objective_offset(problem.objective);
    if (schedules.size() != problem.units.size()) throw InputError("evaluate_objective: schedule count mismatch");
    for (const auto& s : schedules) {
        if (s.p_net.size() != offset.size()) throw InputError("evaluate_objective: schedule length mismatch");
    }
    double f = 0.0;
    for (std::size_t t = 0; t < offset.size(); ++t) {
        double r = offset[t];
        for (const auto& s : schedules) r += s.p_net[t];
        f += r * r;
    }
    return f;
}

DispatchSolution solve(const DispatchProblem& problem) {
    validate_problem(problem);
    const SolverOptions& opt = problem.options;
    const std::size_t n_units = problem.units.size();
    const std::size_t steps = problem.grid.n_steps;
    const Timeseries offset = objective_offset(problem.objective);
    double constant = 0.0;
    for (double v : offset) constant += v * v;

    DispatchSolution sol;
    auto finish = [&](std::vector<Schedule> schedules, SolveStatus status) {
        sol.schedules = std::move(schedules);
        sol.status = status;
        sol.objective_value = evaluate_objective(problem, sol.schedules);
        sol.summed_net = Timeseries(steps);
        for (const auto& s : sol.schedules) sol.summed_net = sol.summed_net + s.p_net;
        return sol;
    };

    if (!problem.coupling.empty()) {
        const double worst = coupling_infeasibility(problem, sol.stats);
        if (worst > 1e-5) {
            std::vector<Schedule> zero;
            for (const auto& u : problem.units) zero.push_back(zero_schedule(u, problem.grid));
            return finish(std::move(zero), SolveStatus::Infeasible);
        }
    }

    const bool relaxation_only = opt.relaxation == RelaxationMode::Always ||
                                 (opt.relaxation == RelaxationMode::Auto && all_unit_efficiency(problem));
    const double overlap_tol = 1e-6;

    struct Solved {
        bool ok = false;
        double bound = 0.0;
        Candidate candidate;
    };
    auto solve_node = [&](const std::vector<std::uint8_t>& fixings) {
        const qp::BoxQp q = build_qp(problem, fixings, false, offset);
        const qp::Result r = qp::solve(q, qp_settings(opt));
        ++sol.stats.qp_solves;
        sol.stats.qp_iterations += r.iterations;
        sol.stats.certificate = r.certificate;
        Solved s;
        s.ok = r.converged;
        s.bound = r.objective + constant;
        s.candidate = extract(problem, r.x, opt.abs_feas_tol);
        return s;
    };

    std::optional<Evaluated> incumbent;
    auto offer = [&](Candidate c) {
        Evaluated e = evaluate(problem, c);
        if (!e.feasible) return;
        const double tie = 1e-12 * std::max(1.0, std::abs(e.regularized));
        if (!incumbent || e.regularized < incumbent->regularized - tie ||
            (std::abs(e.regularized - incumbent->regularized) <= tie && lex_less(e.schedules, incumbent->schedules))) {
            incumbent = std::move(e);
        }
    };

    const Solved root = solve_node({});
    if (!root.ok) {
        const qp::Certificate& c = sol.stats.certificate;
        std::ostringstream msg;
        msg << "dispatch QP did not converge after " << sol.stats.qp_iterations << " iterations (primal residual "
            << c.primal_residual << ", dual residual " << c.dual_residual << ", gap " << c.duality_gap << ")";
        throw SolverError(msg.str());
    }

    if (relaxation_only || most_overlapping(root.candidate).overlap <= overlap_tol) {
        Candidate c = root.candidate;
        net_out(c, opt.abs_feas_tol);
        Evaluated e = evaluate(problem, c);
        sol.stats.regularized_objective = e.regularized;
        return finish(std::move(e.schedules), SolveStatus::Optimal);
    }

    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    std::size_t next_id = 0;
    {
        Candidate heuristic = root.candidate;
        net_out(heuristic, opt.abs_feas_tol);
        offer(heuristic);
    }
    open.push({root.bound, next_id++, std::vector<std::uint8_t>(n_units * steps, kFree)});
    // The root relaxation was already solved; reuse it for the first expansion.
    std::optional<Solved> cached = root;

    bool exhausted = true;
    while (!open.empty()) {
        if (sol.stats.bnb_nodes >= opt.max_bnb_nodes) {
            exhausted = false;
            break;
        }
        Node node = open.top();
        open.pop();
        if (incumbent && node.bound >= incumbent->regularized - opt.rel_opt_tol * std::abs(incumbent->regularized))
            continue;
        ++sol.stats.bnb_nodes;
        const Solved s = cached ? *cached : solve_node(node.fixings);
        cached.reset();
        if (!s.ok) continue;
        if (incumbent && s.bound >= incumbent->regularized - opt.rel_opt_tol * std::abs(incumbent->regularized))
            continue;
        const Branch b = most_overlapping(s.candidate);
        Candidate rounded = s.candidate;
        net_out(rounded, opt.abs_feas_tol);
        offer(rounded);
        if (b.overlap <= overlap_tol) continue;
        for (std::uint8_t fix : {kNoCharge, kNoDischarge}) {
            Node child{s.bound, next_id++, node.fixings};
            child.fixings[b.unit * steps + b.step] = fix;
            open.push(std::move(child));
        }
    }

    if (!incumbent) {
        std::vector<Schedule> zero;
        for (const auto& u : problem.units) zero.push_back(zero_schedule(u, problem.grid));
        if (!coupling_satisfied(problem, zero, 1e-6)) return finish(std::move(zero), SolveStatus::Infeasible);
        return finish(std::move(zero), SolveStatus::NodeLimit);
    }
    sol.stats.regularized_objective = incumbent->regularized;
    return finish(std::move(incumbent->schedules), exhausted ? SolveStatus::Optimal : SolveStatus::NodeLimit);
}

OracleResult brute_force_oracle(const DispatchProblem& problem, int levels) {
    validate_problem(problem);
    const std::size_t n_units = problem.units.size();
    const std::size_t steps = problem.grid.n_steps;
    if (n_units > 2 || steps > 3 || levels < 2 || levels > 21) {
        throw InputError("brute_force_oracle: limited to 2 units, 3 steps and 2..21 levels");
    }
    const Timeseries offset = objective_offset(problem.objective);
    const double dt = problem.grid.dt_hours;

    // Feasible per-unit trajectories, flattened as steps-sized rows.
    std::vector<std::vector<double>> trajectories(n_units);
    for (std::size_t u = 0; u < n_units; ++u) {
        const EssParams& p = problem.units[u];
        std::vector<double> grid_values(static_cast<std::size_t>(levels));
        for (int j = 0; j < levels; ++j) {
            grid_values[static_cast<std::size_t>(j)] = -p.p_max + 2.0 * p.p_max * j / (levels - 1);
        }
        std::vector<int> idx(steps, 0);
        while (true) {
            double energy = p.energy_initial();
            bool ok = true;
            for (std::size_t t = 0; t < steps && ok; ++t) {
                const double net = grid_values[static_cast<std::size_t>(idx[t])];
                energy += (net > 0.0 ? net * p.eta_chg : net / p.eta_dch) * dt;
                ok = energy >= -1e-12 * p.capacity && energy <= p.capacity * (1.0 + 1e-12);
            }
            if (ok) {
                for (std::size_t t = 0; t < steps; ++t) trajectories[u].push_back(grid_values[static_cast<std::size_t>(idx[t])]);
            }
            std::size_t k = 0;
            while (k < steps && ++idx[k] == levels) idx[k++] = 0;
            if (k == steps) break;
        }
    }

    auto coupling_ok = [&](const double* a, const double* b) {
        for (const auto& c : problem.coupling) {
            const auto units = members(c, n_units);
            for (std::size_t t = 0; t < steps; ++t) {
                double s = 0.0;
                for (std::size_t u : units) s += (u == 0 ? a : b)[t];
                if (s > c.bound[t] + 1e-12) return false;
            }
        }
        return true;
    };

    OracleResult best;
    best.objective = std::numeric_limits<double>::infinity();
    const std::size_t n0 = trajectories[0].size() / steps;
    const std::size_t n1 = n_units == 2 ? trajectories[1].size() / steps : 1;
    std::size_t best0 = 0, best1 = 0;
    for (std::size_t i = 0; i < n0; ++i) {
        const double* a = &trajectories[0][i * steps];
        double partial[3];
        for (std::size_t t = 0; t < steps; ++t) partial[t] = offset[t] + a[t];
        for (std::size_t j = 0; j < n1; ++j) {
            const double* b = n_units == 2 ? &trajectories[1][j * steps] : nullptr;
            double f = 0.0;
            for (std::size_t t = 0; t < steps; ++t) {
                const double r = partial[t] + (b ? b[t] : 0.0);
                f += r * r;
            }
            if (f < best.objective && (problem.coupling.empty() || coupling_ok(a, b))) {
                best.objective = f;
                best0 = i;
                best1 = j;
            }
            if (problem.coupling.empty() || coupling_ok(a, b)) ++best.feasible_points;
        }
    }
    if (best.feasible_points == 0) throw SolverError("brute_force_oracle: no feasible grid point");
    best.net.emplace_back(std::vector<double>(&trajectories[0][best0 * steps], &trajectories[0][best0 * steps] + steps));
    if (n_units == 2) {
        best.net.emplace_back(
            std::vector<double>(&trajectories[1][best1 * steps], &trajectories[1][best1 * steps] + steps));
    }
    return best;
}

}  // namespace flexcoord
