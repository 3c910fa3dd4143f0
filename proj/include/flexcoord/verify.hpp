#pragma once

#include "flexcoord/optimizer.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace flexcoord {

/// Bound on how far the best point of the oracle's power grid can be from
/// the continuous optimum of `problem` (objective units).
double oracle_grid_slack(const DispatchProblem& problem, const DispatchSolution& solution, int levels);

/// Random instance small enough for brute_force_oracle: 1..2 units,
/// 1..3 steps, random tracking or flattening offsets.
DispatchProblem random_oracle_instance(std::mt19937_64& rng, bool lossy);

struct OracleCheck {
    std::size_t index = 0;
    double solver_objective = 0.0;
    double oracle_objective = 0.0;
    double slack = 0.0;
    bool passed = false;
};

struct OracleReport {
    std::vector<OracleCheck> checks;
    std::size_t failures = 0;
    double seconds = 0.0;
};

/// Solves `instances` random problems and compares each against the oracle:
/// oracle - slack <= solver <= oracle + slack. Every fourth instance is lossy.
OracleReport verify_oracle_equivalence(std::size_t instances, std::uint64_t seed, int levels = 21);

}  // namespace flexcoord
