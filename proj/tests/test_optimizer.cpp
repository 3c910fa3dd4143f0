#include "doctest.h"

#include "flexcoord/optimizer.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <random>

using namespace flexcoord;

namespace {

EssParams unit(std::string id, double p_max, double capacity, double soc0 = 0.5, double eta = 1.0) {
    return EssParams{std::move(id), p_max, capacity, eta, eta, soc0};
}

void require_feasible(const DispatchProblem& p, const DispatchSolution& s) {
    REQUIRE(s.schedules.size() == p.units.size());
    for (std::size_t u = 0; u < p.units.size(); ++u) {
        CHECK(check_feasibility(p.units[u], p.grid, s.schedules[u], 1e-6).empty());
    }
}

}  // namespace

TEST_CASE("zero target gives the idle schedule") {
    DispatchProblem p{TimeGrid{4, 0.25}, {unit("a", 1.0, 1.0)}, Tracking{Timeseries(4)}, {}, {}};
    auto s = solve(p);
    CHECK(s.status == SolveStatus::Optimal);
    CHECK(s.objective_value < 1e-14);
    for (double v : s.schedules[0].p_net) CHECK(v == 0.0);
    p.grid.n_steps = 3;
    p.objective = Tracking{Timeseries(3)};
    CHECK(brute_force_oracle(p, 11).objective == 0.0);
}

TEST_CASE("energy-limited discharge request") {
    // 0.2 MWh above empty = 0.8 MW over two 0.25 h steps; the squared error is
    // minimized by the even split 0.4/0.4 -> 2 * (1.3 - 0.4)^2 = 1.62.
    DispatchProblem p{TimeGrid{2, 0.25}, {unit("a", 1.3, 0.4)}, Tracking{Timeseries{1.3, 1.3}}, {}, {}};
    auto s = solve(p);
    require_feasible(p, s);
    CHECK(s.objective_value == doctest::Approx(1.62).epsilon(1e-6));
    CHECK(s.schedules[0].p_dch[0] == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(s.schedules[0].soc[2] == doctest::Approx(0.0).epsilon(1e-6));

    // brute force over a fine 1-D grid of (d1, d2) as the independent check
    double best = 1e9;
    for (int i = 0; i <= 1300; ++i) {
        for (int j = 0; j <= 1300; ++j) {
            const double d1 = i * 1e-3, d2 = j * 1e-3;
            if ((d1 + d2) * 0.25 > 0.2 + 1e-12) continue;
            best = std::min(best, (1.3 - d1) * (1.3 - d1) + (1.3 - d2) * (1.3 - d2));
        }
    }
    CHECK(best == doctest::Approx(1.62).epsilon(1e-9));
    const auto oracle = brute_force_oracle(p, 21);
    CHECK(s.objective_value <= oracle.objective + 1e-9);
}

TEST_CASE("identical units split evenly and match a doubled unit") {
    TimeGrid g{12, 0.25};
    Timeseries base(12);
    for (std::size_t t = 0; t < 12; ++t) base[t] = 2.0 * std::sin(0.6 * static_cast<double>(t)) + 0.3;
    DispatchProblem pair{g, {unit("a", 0.8, 0.6), unit("b", 0.8, 0.6)}, FlattenIpf{base}, {}, {}};
    DispatchProblem single{g, {unit("ab", 1.6, 1.2)}, FlattenIpf{base}, {}, {}};
    auto s2 = solve(pair);
    auto s1 = solve(single);
    require_feasible(pair, s2);
    for (std::size_t t = 0; t < 12; ++t) {
        CHECK(s2.schedules[0].p_net[t] == doctest::Approx(s2.schedules[1].p_net[t]).epsilon(1e-7));
        CHECK(s2.summed_net[t] == doctest::Approx(s1.summed_net[t]).epsilon(1e-5));
    }
    CHECK(s2.objective_value == doctest::Approx(s1.objective_value).epsilon(1e-6));
}

TEST_CASE("relaxation is exact at unit efficiency") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = testing::random_small_problem(rng, false);
        auto s = solve(p);
        require_feasible(p, s);
        CHECK(s.stats.bnb_nodes == 0);
        for (const auto& sch : s.schedules) {
            for (std::size_t t = 0; t < sch.n_steps(); ++t) CHECK(!(sch.p_chg[t] > 0.0 && sch.p_dch[t] > 0.0));
        }
        CHECK(s.objective_value == doctest::Approx(evaluate_objective(p, s.schedules)).epsilon(1e-12));
    }
}

TEST_CASE("branch and bound removes simultaneous charge and discharge") {
    // Nearly full lossy unit facing a large surplus: the relaxation burns
    // energy by charging and discharging at once, the exclusive model cannot.
    DispatchProblem p{TimeGrid{3, 0.5}, {unit("a", 1.0, 1.0, 0.9, 0.8)}, FlattenIpf{Timeseries{-3.0, -3.0, -3.0}},
                      {}, {}};
    auto s = solve(p);
    require_feasible(p, s);
    CHECK(s.status == SolveStatus::Optimal);
    CHECK(s.stats.bnb_nodes > 0);
    const auto oracle = brute_force_oracle(p, 21);
    CHECK(s.objective_value <= oracle.objective + 1e-7);
    CHECK(s.objective_value >= oracle.objective - testing::oracle_slack(p, s, 21));

    p.options.max_bnb_nodes = 1;
    auto limited = solve(p);
    CHECK(limited.status == SolveStatus::NodeLimit);
    require_feasible(p, limited);
}

TEST_CASE("solver against the oracle on random small instances") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        auto p = testing::random_small_problem(rng, trial % 3 == 0);
        auto s = solve(p);
        require_feasible(p, s);
        const auto o = brute_force_oracle(p, 11);
        const double slack = testing::oracle_slack(p, s, 11);
        CHECK(s.objective_value <= o.objective + 1e-7 * std::max(1.0, o.objective));
        CHECK(s.objective_value >= o.objective - slack);
    }
}

TEST_CASE("oracle refinement is monotone on nested grids") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = testing::random_small_problem(rng, false);
        // 3 -> 5 -> 9 -> 17 levels are nested grids
        double prev = brute_force_oracle(p, 3).objective;
        for (int levels : {5, 9, 17}) {
            const double v = brute_force_oracle(p, levels).objective;
            CHECK(v <= prev + 1e-12);
            prev = v;
        }
    }
}

TEST_CASE("permutation of identical units leaves the objective unchanged") {
    TimeGrid g{8, 0.25};
    Timeseries base{1, 2, 3, -1, -2, 0.5, 2.5, 1};
    DispatchProblem p{g, {unit("a", 1.0, 0.5), unit("b", 0.4, 1.2), unit("c", 1.0, 0.5)}, FlattenIpf{base}, {}, {}};
    auto s1 = solve(p);
    std::swap(p.units[0], p.units[2]);
    std::swap(p.units[1], p.units[2]);
    auto s2 = solve(p);
    CHECK(s1.objective_value == doctest::Approx(s2.objective_value).epsilon(1e-9));
}

TEST_CASE("coupling constraints") {
    TimeGrid g{4, 0.25};
    DispatchProblem p{g, {unit("a", 1.0, 1.0), unit("b", 1.0, 1.0)}, Tracking{Timeseries{-2, -2, -2, -2}}, {}, {}};
    SUBCASE("bound caps the summed charging") {
        p.coupling.push_back({{}, Timeseries{0.5, 0.5, 0.5, 0.5}});
        auto s = solve(p);
        require_feasible(p, s);
        for (std::size_t t = 0; t < 4; ++t) CHECK(s.summed_net[t] <= 0.5 + 1e-7);
        CHECK(s.objective_value == doctest::Approx(4 * 1.5 * 1.5).epsilon(1e-6));
    }
    SUBCASE("bound on a subset") {
        p.coupling.push_back({{1}, Timeseries{0.0, 0.0, 0.0, 0.0}});
        auto s = solve(p);
        for (std::size_t t = 0; t < 4; ++t) CHECK(s.schedules[1].p_net[t] <= 1e-7);
    }
    SUBCASE("contradictory bound") {
        // summed net <= -1.5 MW for 4 steps needs 1.5 MWh, only 1.0 MWh stored
        p.coupling.push_back({{}, Timeseries{-1.5, -1.5, -1.5, -1.5}});
        CHECK(solve(p).status == SolveStatus::Infeasible);
    }
    SUBCASE("oracle honours coupling") {
        DispatchProblem small{TimeGrid{2, 0.25}, {unit("a", 1.0, 1.0), unit("b", 1.0, 1.0)},
                              Tracking{Timeseries{-2, -2}}, {{{}, Timeseries{0.5, 0.5}}}, {}};
        auto o = brute_force_oracle(small, 21);
        CHECK(o.objective == doctest::Approx(2 * 1.5 * 1.5).epsilon(1e-12));
    }
}

TEST_CASE("evaluate_objective") {
    TimeGrid g{2, 0.25};
    DispatchProblem p{g, {unit("a", 1.0, 1.0)}, Tracking{Timeseries{1, -1}}, {}, {}};
    std::vector<Schedule> zero{zero_schedule(p.units[0], g)};
    CHECK(evaluate_objective(p, zero) == 2.0);
    auto perfect = make_schedule(p.units[0], g, Timeseries{0, 1}, Timeseries{1, 0});
    CHECK(evaluate_objective(p, {perfect}) == 0.0);
    p.objective = FlattenIpf{Timeseries{3, 4}};
    CHECK(evaluate_objective(p, zero) == 25.0);
    CHECK_THROWS_AS(evaluate_objective(p, {}), InputError);
}

TEST_CASE("input validation") {
    DispatchProblem p{TimeGrid{2, 0.25}, {}, Tracking{Timeseries{1, -1}}, {}, {}};
    CHECK_THROWS_AS(solve(p), InputError);
    p.units.push_back(unit("a", 1.0, 1.0));
    p.objective = Tracking{Timeseries{1.0}};
    CHECK_THROWS_AS(solve(p), InputError);
    p.objective = Tracking{Timeseries{1.0, 1.0}};
    p.options.max_bnb_nodes = 0;
    CHECK_THROWS_AS(solve(p), InputError);
    p.options = {};
    p.units.push_back(unit("b", 1.0, 1.0));
    p.units.push_back(unit("c", 1.0, 1.0));
    CHECK_THROWS_AS(brute_force_oracle(p, 11), InputError);
}
