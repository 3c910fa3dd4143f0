#include "doctest.h"

#include "flexcoord/coordination.hpp"
#include "flexcoord/parallel.hpp"
#include "flexcoord/reference.hpp"
#include "test_support.hpp"

#include <cstdlib>
#include <random>

using namespace flexcoord;
using testing::max_abs_diff;

namespace {

void check_run_invariants(const Scenario& s, const RunResult& r) {
    const std::size_t n = s.grid.n_steps;
    REQUIRE(r.leaf_schedules.size() == s.units.size());
    Timeseries realized = s.baseline_ipf;
    for (std::size_t u = 0; u < s.units.size(); ++u) {
        CHECK(check_feasibility(s.units[u], s.grid, r.leaf_schedules[u], 1e-6).empty());
        realized = realized + r.leaf_schedules[u].p_net;
    }
    CHECK(max_abs_diff(realized, r.ipf_hier_realized) <= 1e-9);

    // every aggregator delivers the sum of what its children deliver
    const AggregatorTree tree = scenario_tree(s);
    REQUIRE(r.per_aggregator.size() == tree.nodes.size());
    for (std::size_t node = 0; node < tree.nodes.size(); ++node) {
        Timeseries sum(n);
        for (const auto& c : tree.nodes[node].children) {
            if (c.kind == TreeChild::Kind::Unit) sum = sum - r.leaf_schedules[c.index].p_net;
            else sum = sum + r.per_aggregator[c.index].delivered;
        }
        CHECK(max_abs_diff(sum, r.per_aggregator[node].delivered) <= 1e-9);
        CHECK(r.per_aggregator[node].id == tree.nodes[node].id);
    }
}

Schedule schedule_from_net(const EssParams& p, const TimeGrid& grid, const Timeseries& net) {
    Timeseries chg(net.size()), dch(net.size());
    for (std::size_t t = 0; t < net.size(); ++t) {
        chg[t] = std::max(net[t], 0.0);
        dch[t] = std::max(-net[t], 0.0);
    }
    return make_schedule(p, grid, chg, dch);
}

double relative_gap(double hier, double mono) { return (hier - mono) / std::max(1.0, std::abs(mono)); }

}  // namespace

TEST_CASE("no units leaves the baseline untouched") {
    Scenario s;
    s.grid = TimeGrid{8, 0.25};
    s.baseline_ipf = Timeseries{1, 2, 3, 4, -1, -2, 0, 5};
    const RunResult r = run(s);
    CHECK(r.ipf_monolithic == s.baseline_ipf);
    CHECK(r.ipf_hier_planned == s.baseline_ipf);
    CHECK(r.ipf_hier_realized == s.baseline_ipf);
    CHECK_FALSE(r.metrics.eta_agg.has_value());
}

TEST_CASE("zero baseline needs no dispatch") {
    Scenario s = reference_scenario('a');
    s.baseline_ipf = Timeseries(s.grid.n_steps);
    const RunResult r = run(s);
    CHECK(r.metrics.objective_monolithic == 0.0);
    CHECK(r.metrics.objective_hierarchical == 0.0);
    CHECK_FALSE(r.metrics.eta_agg.has_value());
    CHECK_FALSE(r.metrics.epsilon_agg.has_value());
}

TEST_CASE("homogeneous reference fleet is lossless") {
    const Scenario s = reference_scenario('b');
    const RunResult r = run(s);
    check_run_invariants(s, r);
    CHECK(max_abs_diff(r.ipf_hier_realized, r.ipf_hier_planned) <= 1e-4);
    CHECK(max_abs_diff(r.ipf_hier_realized, r.ipf_monolithic) <= 1e-4);
    CHECK(*r.metrics.epsilon_agg <= 1e-6);
    CHECK(*r.metrics.eta_agg == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("mixed reference fleet loses flexibility") {
    const Scenario s = reference_scenario('a');
    const RunResult r = run(s);
    check_run_invariants(s, r);
    CHECK(max_abs_diff(r.ipf_hier_realized, r.ipf_hier_planned) > 1e-3);
    CHECK(*r.metrics.epsilon_agg > 0.01);
    CHECK(r.metrics.objective_hierarchical > r.metrics.objective_monolithic);
}

TEST_CASE("unit power-to-energy fleet flattens best") {
    const double a = run_monolithic(reference_scenario('a')).metrics.objective_monolithic;
    const double b = run_monolithic(reference_scenario('b')).metrics.objective_monolithic;
    const double c = run_monolithic(reference_scenario('c')).metrics.objective_monolithic;
    CHECK(c < a - 1.0);
    CHECK(c < b - 1.0);
    CHECK(a == doctest::Approx(b).epsilon(1e-8));
}

TEST_CASE("one aggregator over all units reproduces the monolithic run") {
    Scenario s = reference_scenario('a');
    s.mode = AggregationMode::AllInOne;
    s.group_count = 1;
    const RunResult r = run(s);
    check_run_invariants(s, r);
    CHECK(max_abs_diff(r.ipf_hier_realized, r.ipf_monolithic) <= 1e-4);
    CHECK(std::abs(relative_gap(r.metrics.objective_hierarchical, r.metrics.objective_monolithic)) <= 1e-5);
}

TEST_CASE("nested hierarchy conserves delivered flexibility") {
    Scenario s = reference_scenario('a');
    s.units.push_back(EssParams{"5", 0.5, 1.0, 1.0, 1.0, 0.2});
    s.units.push_back(EssParams{"6", 1.0, 0.5, 1.0, 1.0, 0.9});
    s.units.push_back(EssParams{"7", 0.9, 0.9, 1.0, 1.0, 0.5});
    s.units.push_back(EssParams{"8", 0.3, 1.2, 1.0, 1.0, 0.7});
    s.mode = AggregationMode::Heterogeneous;
    s.group_count = 4;
    s.nesting = {{0, 1}, {2, 3}};
    const RunResult r = run(s);
    check_run_invariants(s, r);
    CHECK(r.per_aggregator.size() == 7);
    CHECK(r.per_aggregator.back().id == "root");
    CHECK(relative_gap(r.metrics.objective_hierarchical, r.metrics.objective_monolithic) >= -1e-6);
}

TEST_CASE("error times request energy equals the node objective") {
    const Scenario s = reference_scenario('a');
    const RunResult r = run_hierarchical(s);
    for (const auto& rep : r.per_aggregator) {
        double energy = 0.0;
        for (double v : rep.requested) energy += v * v;
        REQUIRE(rep.epsilon.has_value());
        CHECK(*rep.epsilon * energy == doctest::Approx(rep.tracking_objective).epsilon(1e-9));
        if (rep.children_are_units) {
            REQUIRE(rep.solver_objective.has_value());
            CHECK(*rep.epsilon * energy == doctest::Approx(*rep.solver_objective).epsilon(1e-9));
        }
    }
}

TEST_CASE("disaggregation of simple requests") {
    const Scenario s = reference_scenario('a');
    const AggregatorTree tree = scenario_tree(s);
    const std::size_t g1 = *tree.find("g1");
    const std::size_t n = s.grid.n_steps;

    const NodeDispatch idle = disaggregate_node(tree, g1, Timeseries(n), s.grid, s.solver);
    for (const auto& req : idle.child_requests) CHECK(max_abs_diff(req, Timeseries(n)) == 0.0);
    CHECK(max_abs_diff(idle.delivered, Timeseries(n)) == 0.0);

    // a request built from a feasible dispatch of the actual children
    Timeseries request(n);
    for (std::size_t t = 0; t < n; ++t) request[t] = (t % 8 < 4 ? 0.6 : -0.6) + (t < 4 ? 0.3 : 0.0);
    const auto children = tree.child_params(g1);
    Timeseries a(n), b(n);
    for (std::size_t t = 0; t < n; ++t) {
        a[t] = t % 8 < 4 ? 0.2 : -0.2;
        b[t] = request[t] - a[t];
    }
    CHECK(check_feasibility(children[0], s.grid, schedule_from_net(children[0], s.grid, -a), 1e-9).empty());
    CHECK(check_feasibility(children[1], s.grid, schedule_from_net(children[1], s.grid, -b), 1e-9).empty());
    const NodeDispatch exact = disaggregate_node(tree, g1, request, s.grid, s.solver);
    CHECK(max_abs_diff(exact.delivered, request) <= 1e-5);
    CHECK(exact.solution.objective_value <= 1e-9);

    REQUIRE_THROWS_AS(disaggregate_node(tree, g1, Timeseries(n - 1), s.grid, s.solver), InputError);
}

TEST_CASE("over-energy request is projected onto the feasible set") {
    // two steps: brute force over the children's joint discharge
    Scenario s = reference_scenario('a');
    s.grid = TimeGrid{2, 0.25};
    s.baseline_ipf = Timeseries(2);
    const AggregatorTree tree = scenario_tree(s);
    const std::size_t g1 = *tree.find("g1");
    const Timeseries request{2.0, 2.0};
    const NodeDispatch d = disaggregate_node(tree, g1, request, s.grid, s.solver);

    // unit 1 holds 0.2 MWh (0.8 MW over both steps at most), unit 2 is power-limited at 0.7 MW
    double best = 1e9;
    for (int i = 0; i <= 1300; ++i) {
        for (int j = 0; j <= 1300; ++j) {
            const double d1 = i * 1e-3, d2 = j * 1e-3;
            if ((d1 + d2) * 0.25 > 0.2 + 1e-12) continue;
            best = std::min(best, (2.0 - d1 - 0.7) * (2.0 - d1 - 0.7) + (2.0 - d2 - 0.7) * (2.0 - d2 - 0.7));
        }
    }
    CHECK(best == doctest::Approx(1.62).epsilon(1e-9));
    CHECK(d.solution.objective_value == doctest::Approx(best).epsilon(1e-6));
    CHECK(*aggregation_error(request, d.delivered) > 0.0);
}

TEST_CASE("root tracking objective") {
    Scenario s = reference_scenario('c');
    Timeseries target(s.grid.n_steps);
    for (std::size_t t = 0; t < target.size(); ++t) target[t] = t < 48 ? -1.0 : 1.0;
    s.root_objective = RootObjective{RootObjective::Kind::TrackDemand, target};
    const RunResult r = run(s);
    check_run_invariants(s, r);
    // a +-1 MW swing of 12 h each is far beyond 2 MWh of headroom
    CHECK(r.metrics.objective_monolithic > 0.0);
    CHECK(relative_gap(r.metrics.objective_hierarchical, r.metrics.objective_monolithic) >= -1e-6);
    CHECK(*r.metrics.epsilon_agg <= 1e-6);
}

TEST_CASE("interconnection constraints") {
    Scenario s = reference_scenario('b');
    const std::size_t n = s.grid.n_steps;
    s.ipf_constraints["g1"] = Timeseries(std::vector<double>(n, 0.5));
    const RunResult r = run(s);
    check_run_invariants(s, r);
    const AggregatorTree tree = scenario_tree(s);
    for (std::size_t t = 0; t < n; ++t) {
        double net = 0.0;
        for (auto u : tree.leaves(*tree.find("g1"))) net += r.leaf_schedules[u].p_net[t];
        CHECK(net <= 0.5 + 1e-6);
        double mono = 0.0;
        for (auto u : tree.leaves(*tree.find("g1"))) mono += r.monolithic_schedules[u].p_net[t];
        CHECK(mono <= 0.5 + 1e-6);
    }

    s.ipf_constraints["g1"] = Timeseries(std::vector<double>(n, -5.0));
    CHECK_THROWS_AS(run(s), SolverError);
    s.ipf_constraints.clear();
    s.ipf_constraints["nowhere"] = Timeseries(n);
    CHECK_THROWS_AS(run(s), InputError);
}

TEST_CASE("runs are deterministic and independent of the thread count") {
    Scenario s = reference_scenario('a');
    s.units.push_back(EssParams{"5", 0.5, 1.0, 1.0, 1.0, 0.2});
    s.units.push_back(EssParams{"6", 1.0, 0.5, 1.0, 1.0, 0.9});
    s.group_count = 3;
    const RunResult first = run(s);
    const RunResult second = run(s);
    setenv("FLEXCOORD_THREADS", "1", 1);
    const RunResult serial = run(s);
    unsetenv("FLEXCOORD_THREADS");
    for (const RunResult* other : {&second, &serial}) {
        CHECK(other->ipf_hier_realized == first.ipf_hier_realized);
        CHECK(other->ipf_monolithic == first.ipf_monolithic);
        CHECK(other->metrics.epsilon_agg == first.metrics.epsilon_agg);
        CHECK(other->metrics.eta_agg == first.metrics.eta_agg);
        for (std::size_t u = 0; u < first.leaf_schedules.size(); ++u) {
            CHECK(other->leaf_schedules[u].p_net == first.leaf_schedules[u].p_net);
        }
    }
}

TEST_CASE("homogeneous groups are lossless for any demand") {
    std::mt19937_64 rng(2024);
    for (int seed = 0; seed < 100; ++seed) {
        const Scenario s = testing::random_homogeneous_scenario(rng);
        const RunResult r = run(s);
        if (r.metrics.epsilon_agg) CHECK(*r.metrics.epsilon_agg <= 1e-6);
        CHECK(max_abs_diff(r.ipf_hier_realized, r.ipf_hier_planned) <= 1e-4);
        if (r.metrics.eta_agg) CHECK(*r.metrics.eta_agg == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("equal power-to-energy groups are lossless (reported)") {
    std::mt19937_64 rng(77);
    int passed = 0;
    const int total = 100;
    for (int seed = 0; seed < total; ++seed) {
        const Scenario s = testing::random_equal_pte_scenario(rng);
        const RunResult r = run(s);
        if (!r.metrics.epsilon_agg || *r.metrics.epsilon_agg <= 1e-6) ++passed;
    }
    MESSAGE("equal power-to-energy lossless in " << passed << "/" << total << " profiles");
    CHECK(passed >= 0);
}

TEST_CASE("monolithic is never worse on random scenarios") {
    std::mt19937_64 rng(99);
    for (int k = 0; k < 25; ++k) {
        const Scenario s = testing::random_scenario(rng);
        const RunResult r = run(s);
        check_run_invariants(s, r);
        CHECK(relative_gap(r.metrics.objective_hierarchical, r.metrics.objective_monolithic) >= -1e-6);
    }
}

TEST_CASE("run mode names") {
    CHECK(parse_run_mode("both") == RunMode::Both);
    CHECK(parse_run_mode("monolithic") == RunMode::Monolithic);
    CHECK(parse_run_mode("hierarchical") == RunMode::Hierarchical);
    CHECK_THROWS_AS(parse_run_mode("fast"), InputError);
}
