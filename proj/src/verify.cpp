#include "flexcoord/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace flexcoord {

// A feasible grid point exists within two grid spacings of every continuous
// net-power coordinate (round the cumulative energy), so the objective moves
// by at most the first-order term plus the square, plus the regularizer.
double oracle_grid_slack(const DispatchProblem& problem, const DispatchSolution& solution, int levels) {
    double pmax = 0.0;
    for (const auto& u : problem.units) pmax = std::max(pmax, u.p_max);
    const double units = static_cast<double>(problem.units.size());
    const double step = 2.0 * (2.0 * pmax / (levels - 1));
    const Timeseries offset = objective_offset(problem.objective);
    double slack = 0.0;
    for (std::size_t t = 0; t < problem.grid.n_steps; ++t) {
        const double r = std::abs(offset[t] + solution.summed_net[t]);
        slack += 2.0 * r * units * step + (units * step) * (units * step);
    }
    slack += problem.options.regularization * 2.0 * units * static_cast<double>(problem.grid.n_steps) * pmax * pmax;
    return slack;
}

DispatchProblem random_oracle_instance(std::mt19937_64& rng, bool lossy) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    DispatchProblem p;
    p.grid = TimeGrid{1 + rng() % 3, 0.25 + 0.75 * u01(rng)};
    const std::size_t n_units = 1 + rng() % 2;
    for (std::size_t u = 0; u < n_units; ++u) {
        EssParams e;
        e.id = "u" + std::to_string(u);
        e.p_max = 0.2 + 1.8 * u01(rng);
        e.capacity = 0.2 + 2.0 * u01(rng);
        e.soc_initial = u01(rng);
        if (lossy) {
            e.eta_chg = 0.8 + 0.2 * u01(rng);
            e.eta_dch = 0.8 + 0.2 * u01(rng);
        }
        p.units.push_back(e);
    }
    Timeseries offset(p.grid.n_steps);
    for (std::size_t t = 0; t < offset.size(); ++t) offset[t] = 4.0 * (u01(rng) - 0.5);
    if (rng() % 2) p.objective = Tracking{offset};
    else p.objective = FlattenIpf{offset};
    return p;
}

OracleReport verify_oracle_equivalence(std::size_t instances, std::uint64_t seed, int levels) {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    OracleReport report;
    for (std::size_t i = 0; i < instances; ++i) {
        const DispatchProblem p = random_oracle_instance(rng, i % 4 == 3);
        const DispatchSolution s = solve(p);
        const OracleResult o = brute_force_oracle(p, levels);
        OracleCheck c;
        c.index = i;
        c.solver_objective = s.objective_value;
        c.oracle_objective = o.objective;
        c.slack = oracle_grid_slack(p, s, levels);
        c.passed = s.status == SolveStatus::Optimal && s.objective_value <= o.objective + c.slack &&
                   s.objective_value >= o.objective - c.slack;
        if (!c.passed) ++report.failures;
        report.checks.push_back(c);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace flexcoord
