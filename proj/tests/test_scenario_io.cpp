#include "doctest.h"

#include "flexcoord/reference.hpp"
#include "flexcoord/scenario_io.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <cstdlib>
#include <bit>
#include <cstdint>
#include <functional>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

using namespace flexcoord;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(FLEXCOORD_SOURCE_DIR) / "scenarios";

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("flexcoord_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::string error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

const std::string kTwoUnits = R"(
name = "tiny"
[grid]
n_steps = 8
[[units]]
id = "a"
p_max_mw = 1.0
capacity_mwh = 1.0
[[units]]
id = "b"
p_max_mw = 0.5
capacity_mwh = 2.0
[hierarchy]
mode = "heterogeneous"
group_count = 2
[demand]
values = [1.0, 2.0, -1.0, 0.5, 0.0, -2.0, 1.5, 0.25]
)";

int cli(const std::string& args) {
    const std::string cmd = std::string("\"") + FLEXCOORD_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("shipped scenario_a loads with its fleet and hierarchy") {
    const auto loaded = load_scenario(kScenarios / "scenario_a.toml");
    const Scenario& s = loaded.scenario;
    CHECK(s.units.size() == 4);
    CHECK(s.group_count == 2);
    CHECK(s.mode == AggregationMode::Heterogeneous);
    CHECK(s.grid.n_steps == 96);
    CHECK(s.grid.dt_hours == 0.25);
    CHECK(s.units[0].p_max == 1.3);
    CHECK(s.units[1].capacity == 1.6);
    CHECK(s.baseline_ipf.size() == 96);
    // efficiencies and initial SoC come from defaults and are reported
    CHECK(s.units[2].eta_chg == 1.0);
    CHECK(s.units[3].soc_initial == 0.5);
    bool saw_eta = false;
    for (const auto& line : loaded.defaults) saw_eta = saw_eta || line.find("eta_chg") != std::string::npos;
    CHECK(saw_eta);
}

TEST_CASE("all shipped scenarios load") {
    for (const char* name : {"scenario_a.toml", "scenario_b.toml", "scenario_c.toml", "large.toml"}) {
        CAPTURE(name);
        CHECK_NOTHROW(load_scenario(kScenarios / name));
    }
    CHECK_NOTHROW(load_sweep_spec(kScenarios / "sweep_capacity.toml"));
}

TEST_CASE("semantic and syntax errors are named") {
    std::string text = kTwoUnits;
    text.replace(text.find("capacity_mwh = 2.0"), 18, "");
    CHECK(error_of([&] { parse_scenario(text, ".", "tiny.toml"); }).find("capacity required") != std::string::npos);

    const std::string typo = kTwoUnits + "[solver]\nrelaxaton = \"auto\"\n";
    const std::string msg = error_of([&] { parse_scenario(typo, ".", "tiny.toml"); });
    CHECK(msg.find("unknown key") != std::string::npos);
    CHECK(msg.find("relaxaton") != std::string::npos);
    CHECK(msg.find("tiny.toml:") == 0);

    const std::string broken = "name = \"x\"\n[grid\nn_steps = 4\n";
    const std::string parse_msg = error_of([&] { parse_scenario(broken, ".", "broken.toml"); });
    CHECK(parse_msg.find("broken.toml:2:") == 0);
    CHECK(parse_msg.find("parse error") != std::string::npos);
}

TEST_CASE("demand CSV with too few rows is a length mismatch") {
    const fs::path dir = scratch_dir("short_csv");
    {
        std::ofstream out(dir / "d.csv");
        out << "t,p_mw\n";
        for (int t = 0; t < 95; ++t) out << t << ",0.5\n";
    }
    const std::string text = "[[units]]\nid = \"a\"\np_max_mw = 1.0\ncapacity_mwh = 1.0\n[demand]\ncsv = \"d.csv\"\n";
    CHECK(error_of([&] { parse_scenario(text, dir); }).find("length mismatch") != std::string::npos);
}

TEST_CASE("timeseries CSV parsing") {
    const TimeGrid grid{16, 0.25};
    std::string zeros = "t,p_mw\n";
    for (int t = 0; t < 16; ++t) zeros += std::to_string(t) + ",0.0\n";
    CHECK(parse_timeseries_csv(zeros, grid, "z.csv") == Timeseries(16));

    std::string text = "# comment line\nt,p_mw\n";
    for (int t = 0; t < 16; ++t) text += std::to_string(t) + (t == 12 ? ",1.25\n" : ",0\n");
    CHECK(parse_timeseries_csv(text, grid, "x.csv")[12] == 1.25);

    std::string kw = zeros;
    kw.replace(0, 6, "t,p_kw");
    CHECK(error_of([&] { parse_timeseries_csv(kw, grid, "kw.csv"); }).find("header") != std::string::npos);

    std::string bad = zeros;
    bad.replace(bad.find("5,0.0"), 5, "5,abc");
    const std::string msg = error_of([&] { parse_timeseries_csv(bad, grid, "bad.csv"); });
    CHECK(msg.find("non-numeric") != std::string::npos);
    CHECK(msg.find("line 7") != std::string::npos);
}

TEST_CASE("timeseries CSV round trip is bit identical") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    Timeseries s(200);
    for (auto& v : s) v = u(rng);
    s[0] = 0.1;
    s[1] = 1.0 / 3.0;
    s[2] = -0.0;
    s[3] = std::numeric_limits<double>::denorm_min();
    s[4] = std::numeric_limits<double>::max();
    const fs::path path = scratch_dir("roundtrip") / "s.csv";
    write_timeseries_csv(path, s);
    const Timeseries back = load_timeseries_csv(path, TimeGrid{s.size(), 0.25});
    for (std::size_t t = 0; t < s.size(); ++t) {
        CAPTURE(t);
        CHECK(std::bit_cast<std::uint64_t>(s[t]) == std::bit_cast<std::uint64_t>(back[t]));
    }
}

TEST_CASE("resolved manifest reproduces the run exactly") {
    const Scenario original = load_scenario(kScenarios / "scenario_c.toml").scenario;
    const fs::path dir = scratch_dir("manifest");
    const RunResult first = run(original, RunMode::Both);
    write_results(first, original, RunMode::Both, dir);

    const Scenario reloaded = load_scenario(dir / "scenario.resolved.toml").scenario;
    CHECK(scenario_to_toml(reloaded) == scenario_to_toml(original));
    const RunResult second = run(reloaded, RunMode::Both);
    const fs::path dir2 = scratch_dir("manifest2");
    write_results(second, reloaded, RunMode::Both, dir2);
    for (const char* f : {"ipf.csv", "schedules.csv", "schedules_monolithic.csv", "scenario.resolved.toml"}) {
        CAPTURE(f);
        CHECK(slurp(dir / f) == slurp(dir2 / f));
    }
}

TEST_CASE("result files have the documented layout") {
    const Scenario s = parse_scenario(kTwoUnits, ".").scenario;
    const fs::path dir = scratch_dir("layout");
    write_results(run(s, RunMode::Both), s, RunMode::Both, dir);
    const std::string ipf = slurp(dir / "ipf.csv");
    CHECK(ipf.rfind("t,ipf_baseline,ipf_monolithic,ipf_hier_planned,ipf_hier_realized\n", 0) == 0);
    CHECK(std::count(ipf.begin(), ipf.end(), '\n') == 9);
    const std::string sched = slurp(dir / "schedules.csv");
    CHECK(sched.rfind("unit,t,p_chg,p_dch,p_net,soc\n", 0) == 0);
    CHECK(std::count(sched.begin(), sched.end(), '\n') == 1 + 2 * 8);

    const auto metrics = nlohmann::json::parse(slurp(dir / "metrics.json"));
    CHECK(metrics.contains("epsilon_agg"));
    CHECK(metrics.contains("eta_agg"));
    CHECK(metrics["aggregators"].size() == 3);
}

TEST_CASE("a scenario without units leaves every IPF column at the baseline") {
    const std::string text = "[grid]\nn_steps = 4\n[demand]\nvalues = [1.0, -0.5, 2.0, 0.0]\n";
    const Scenario s = parse_scenario(text, ".").scenario;
    REQUIRE(s.units.empty());
    const RunResult r = run(s, RunMode::Both);
    CHECK(r.ipf_monolithic == r.ipf_baseline);
    CHECK(r.ipf_hier_planned == r.ipf_baseline);
    CHECK(r.ipf_hier_realized == r.ipf_baseline);
    const fs::path dir = scratch_dir("empty_units");
    write_results(r, s, RunMode::Both, dir);
    const std::string ipf = slurp(dir / "ipf.csv");
    CHECK(ipf.find("1,-0.5,-0.5,-0.5,-0.5\n") != std::string::npos);
}

TEST_CASE("zero demand writes a null efficiency") {
    std::string text = kTwoUnits;
    text.replace(text.find("values = ["), std::string::npos, "values = [0, 0, 0, 0, 0, 0, 0, 0]\n");
    const Scenario s = parse_scenario(text, ".").scenario;
    const RunResult r = run(s, RunMode::Both);
    CHECK_FALSE(r.metrics.eta_agg.has_value());
    const auto metrics = nlohmann::json::parse(metrics_json(r, s, RunMode::Both));
    CHECK(metrics["eta_agg"].is_null());
}

TEST_CASE("sweep produces one row per sample point") {
    const Scenario base = load_scenario(kScenarios / "scenario_a.toml").scenario;
    SweepSpec spec;
    spec.p1_values = {0.5, 1.0};
    spec.steps = 3;
    const auto rows = run_sweep(base, spec);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].p1 == 0.5);
    CHECK(rows[0].c1 == 0.05);
    CHECK(rows[1].c1 == doctest::Approx(1.0));
    CHECK(rows[5].p1 == 1.0);
    CHECK(rows[5].c1 == 1.95);
    for (const auto& row : rows) CHECK(row.epsilon.has_value());

    const fs::path path = scratch_dir("sweep") / "sweep.csv";
    write_sweep_csv(path, rows);
    const std::string csv = slurp(path);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}

TEST_CASE("sweep spec validation") {
    CHECK(error_of([] { parse_sweep_spec("[sweep]\nsteps = 1\n", "."); }).find("steps") != std::string::npos);
    CHECK(error_of([] { parse_sweep_spec("[sweep]\nstep = 4\n", "."); }).find("unknown key") != std::string::npos);
    CHECK(error_of([] { parse_sweep_spec("x = 1\n", "."); }).find("[sweep]") != std::string::npos);
}

TEST_CASE("command line exit codes") {
    const std::string a = (kScenarios / "scenario_a.toml").string();
    const fs::path dir = scratch_dir("cli");
    CHECK(cli("run --scenario \"" + a + "\" --out \"" + (dir / "ok").string() + "\"") == 0);
    CHECK(fs::exists(dir / "ok" / "metrics.json"));
    CHECK(cli("run") == 1);
    CHECK(cli("frobnicate") == 1);
    CHECK(cli("run --scenario \"" + (dir / "missing.toml").string() + "\" --out \"" + dir.string() + "\"") == 1);

    {
        std::ofstream out(dir / "typo.toml");
        out << kTwoUnits << "[grid2]\n";
    }
    CHECK(cli("run --scenario \"" + (dir / "typo.toml").string() + "\" --out \"" + dir.string() + "\"") == 1);

    // the root cannot push its summed net power below the fleet's power limit
    {
        std::ofstream out(dir / "infeasible.toml");
        out << kTwoUnits << "[hierarchy.constraints]\nroot = -10.0\n";
    }
    CHECK(cli("run --scenario \"" + (dir / "infeasible.toml").string() + "\" --out \"" + (dir / "inf").string() + "\"") == 2);
}
