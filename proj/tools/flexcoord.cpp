#include "flexcoord/scenario_io.hpp"
#include "flexcoord/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fc = flexcoord;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kSolverError = 2;

std::string show(const std::optional<double>& v) { return v ? fc::format_double(*v) : "undefined"; }

fc::LoadedScenario load_logged(const std::string& path) {
    fc::LoadedScenario loaded = fc::load_scenario(path);
    for (const auto& d : loaded.defaults) std::cerr << "default: " << d << "\n";
    return loaded;
}

fs::path output_dir(const std::string& out, const fc::LoadedScenario& loaded) {
    if (!out.empty()) return out;
    if (loaded.output_dir) return *loaded.output_dir;
    throw fc::InputError("no output directory: pass --out or set [output] directory in the scenario");
}

int cmd_run(const std::string& scenario, const std::string& mode_text, const std::string& out) {
    const fc::RunMode mode = fc::parse_run_mode(mode_text);
    const fc::LoadedScenario loaded = load_logged(scenario);
    const fs::path dir = output_dir(out, loaded);
    const fc::RunResult r = fc::run(loaded.scenario, mode);
    fc::write_results(r, loaded.scenario, mode, dir);
    std::cout << "scenario " << loaded.scenario.name << " (" << fc::to_string(mode) << ")\n";
    std::cout << "  epsilon_agg = " << show(r.metrics.epsilon_agg) << "\n";
    std::cout << "  eta_agg     = " << show(r.metrics.eta_agg) << "\n";
    if (r.has_monolithic) std::cout << "  objective monolithic   = " << fc::format_double(r.metrics.objective_monolithic) << "\n";
    if (r.has_hierarchical) {
        std::cout << "  objective hierarchical = " << fc::format_double(r.metrics.objective_hierarchical)
                  << " (planned " << fc::format_double(r.metrics.objective_hier_planned) << ")\n";
    }
    std::cout << "  results in " << dir.string() << "\n";
    return kOk;
}

int cmd_sweep(const std::string& scenario, const std::string& spec_path, const std::string& out) {
    const fc::LoadedScenario loaded = load_logged(scenario);
    const fs::path dir = output_dir(out, loaded);
    const fc::SweepSpec spec = fc::load_sweep_spec(spec_path);
    const auto rows = fc::run_sweep(loaded.scenario, spec);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw fc::IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    fc::write_sweep_csv(dir / "sweep.csv", rows);
    std::cout << rows.size() << " sweep points written to " << (dir / "sweep.csv").string() << "\n";
    return kOk;
}

int cmd_demand_study(const std::string& scenario, const std::vector<std::string>& demands, const std::string& out) {
    const fc::LoadedScenario loaded = load_logged(scenario);
    const fs::path dir = output_dir(out, loaded);
    std::vector<fs::path> paths(demands.begin(), demands.end());
    const auto rows = fc::run_demand_study(loaded.scenario, paths, dir);
    for (const auto& r : rows) {
        std::cout << r.demand << ": epsilon_agg = " << show(r.epsilon) << ", eta_agg = " << show(r.eta) << "\n";
    }
    std::cout << "summary in " << (dir / "demand_study.csv").string() << "\n";
    return kOk;
}

int cmd_verify(std::size_t instances, std::uint64_t seed, int levels) {
    if (levels < 2 || levels > 21) throw fc::InputError("--levels must be in [2, 21]");
    const fc::OracleReport report = fc::verify_oracle_equivalence(instances, seed, levels);
    for (const auto& c : report.checks) {
        if (!c.passed) {
            std::cerr << "instance " << c.index << ": solver " << fc::format_double(c.solver_objective) << ", oracle "
                      << fc::format_double(c.oracle_objective) << ", slack " << fc::format_double(c.slack) << "\n";
        }
    }
    std::printf("oracle equivalence: %zu/%zu instances within grid slack (%.2f s)\n", instances - report.failures,
                instances, report.seconds);
    return report.failures == 0 ? kOk : kSolverError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical vs monolithic coordination of storage flexibility"};
    app.require_subcommand(1);

    std::string scenario, mode = "both", out, spec;
    std::vector<std::string> demands;
    std::size_t instances = 200;
    std::uint64_t seed = 1;
    int levels = 21;

    auto* run = app.add_subcommand("run", "Run one scenario and write ipf.csv, schedules.csv and metrics.json");
    run->add_option("--scenario", scenario, "Scenario TOML file")->required();
    run->add_option("--mode", mode, "monolithic, hierarchical or both")->capture_default_str();
    run->add_option("--out", out, "Output directory (default: [output] directory of the scenario)");

    auto* sweep = app.add_subcommand("sweep", "Capacity distribution sweep over the scenario's groups");
    sweep->add_option("--scenario", scenario, "Scenario TOML file")->required();
    sweep->add_option("--spec", spec, "Sweep TOML file")->required();
    sweep->add_option("--out", out, "Output directory");

    auto* study = app.add_subcommand("demand-study", "Run the scenario once per demand series");
    study->add_option("--scenario", scenario, "Scenario TOML file")->required();
    study->add_option("--demand", demands, "Demand CSV files (t,p_mw)")->required()->expected(1, -1);
    study->add_option("--out", out, "Output directory");

    auto* verify = app.add_subcommand("verify", "Compare the solver against brute-force enumeration");
    verify->add_option("--instances", instances, "Number of random instances")->capture_default_str();
    verify->add_option("--seed", seed, "Random seed")->capture_default_str();
    verify->add_option("--levels", levels, "Power levels per unit and step for the oracle")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        std::cerr << (sub ? sub->help() : app.help());
        return kInputError;
    }

    try {
        if (*run) return cmd_run(scenario, mode, out);
        if (*sweep) return cmd_sweep(scenario, spec, out);
        if (*study) return cmd_demand_study(scenario, demands, out);
        if (*verify) return cmd_verify(instances, seed, levels);
    } catch (const fc::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const fc::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kInputError;
    } catch (const fc::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kSolverError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSolverError;
    }
    return kInputError;
}
