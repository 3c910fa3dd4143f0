#include "flexcoord/coordination.hpp"
#include "flexcoord/metrics.hpp"
#include "flexcoord/optimizer.hpp"
#include "flexcoord/reference.hpp"
#include "flexcoord/scenario_io.hpp"
#include "flexcoord/verify.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace flexcoord;

// Timeseries crosses the boundary as a plain list of floats.
namespace pybind11::detail {
template <>
struct type_caster<Timeseries> {
    PYBIND11_TYPE_CASTER(Timeseries, const_name("list[float]"));

    bool load(handle src, bool convert) {
        list_caster<std::vector<double>, double> inner;
        if (!inner.load(src, convert)) return false;
        value = Timeseries(std::move(static_cast<std::vector<double>&>(inner)));
        return true;
    }

    static handle cast(const Timeseries& series, return_value_policy policy, handle parent) {
        return list_caster<std::vector<double>, double>::cast(series.values(), policy, parent);
    }
};
}  // namespace pybind11::detail

PYBIND11_MODULE(flexcoord, m) {
    m.doc() = "Monolithic and hierarchical coordination of energy storage flexibility";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::enum_<AggregationMode>(m, "AggregationMode")
        .value("ALL_IN_ONE", AggregationMode::AllInOne)
        .value("HOMOGENEOUS", AggregationMode::Homogeneous)
        .value("HETEROGENEOUS", AggregationMode::Heterogeneous);
    py::enum_<RunMode>(m, "RunMode")
        .value("MONOLITHIC", RunMode::Monolithic)
        .value("HIERARCHICAL", RunMode::Hierarchical)
        .value("BOTH", RunMode::Both);
    py::enum_<SolveStatus>(m, "SolveStatus")
        .value("OPTIMAL", SolveStatus::Optimal)
        .value("NODE_LIMIT", SolveStatus::NodeLimit)
        .value("INFEASIBLE", SolveStatus::Infeasible);
    py::enum_<RelaxationMode>(m, "RelaxationMode")
        .value("AUTO", RelaxationMode::Auto)
        .value("ALWAYS", RelaxationMode::Always)
        .value("NEVER", RelaxationMode::Never);

    py::class_<TimeGrid>(m, "TimeGrid")
        .def(py::init([](std::size_t n_steps, double dt_hours) { return TimeGrid{n_steps, dt_hours}; }),
             py::arg("n_steps") = 96, py::arg("dt_hours") = 0.25)
        .def_readwrite("n_steps", &TimeGrid::n_steps)
        .def_readwrite("dt_hours", &TimeGrid::dt_hours);

    py::class_<EssParams>(m, "EssParams")
        .def(py::init([](std::string id, double p_max, double capacity, double eta_chg, double eta_dch, double soc_initial) {
                 return EssParams{std::move(id), p_max, capacity, eta_chg, eta_dch, soc_initial};
             }),
             py::arg("id"), py::arg("p_max"), py::arg("capacity"), py::arg("eta_chg") = 1.0, py::arg("eta_dch") = 1.0,
             py::arg("soc_initial") = 0.5)
        .def_readwrite("id", &EssParams::id)
        .def_readwrite("p_max", &EssParams::p_max)
        .def_readwrite("capacity", &EssParams::capacity)
        .def_readwrite("eta_chg", &EssParams::eta_chg)
        .def_readwrite("eta_dch", &EssParams::eta_dch)
        .def_readwrite("soc_initial", &EssParams::soc_initial)
        .def("__repr__", [](const EssParams& e) {
            return "EssParams(id='" + e.id + "', p_max=" + format_double(e.p_max) + ", capacity=" + format_double(e.capacity) + ")";
        });

    py::class_<SolverOptions>(m, "SolverOptions")
        .def(py::init<>())
        .def_readwrite("rel_opt_tol", &SolverOptions::rel_opt_tol)
        .def_readwrite("abs_feas_tol", &SolverOptions::abs_feas_tol)
        .def_readwrite("max_bnb_nodes", &SolverOptions::max_bnb_nodes)
        .def_readwrite("relaxation", &SolverOptions::relaxation)
        .def_readwrite("regularization", &SolverOptions::regularization);

    py::class_<Scenario>(m, "Scenario")
        .def(py::init<>())
        .def_readwrite("name", &Scenario::name)
        .def_readwrite("grid", &Scenario::grid)
        .def_readwrite("units", &Scenario::units)
        .def_readwrite("baseline_ipf", &Scenario::baseline_ipf)
        .def_readwrite("mode", &Scenario::mode)
        .def_readwrite("group_count", &Scenario::group_count)
        .def_readwrite("explicit_groups", &Scenario::explicit_groups)
        .def_readwrite("nesting", &Scenario::nesting)
        .def_readwrite("ipf_constraints", &Scenario::ipf_constraints)
        .def_readwrite("solver", &Scenario::solver)
        .def("to_toml", [](const Scenario& s) { return scenario_to_toml(s); });

    py::class_<Schedule>(m, "Schedule")
        .def_readonly("p_chg", &Schedule::p_chg)
        .def_readonly("p_dch", &Schedule::p_dch)
        .def_readonly("p_net", &Schedule::p_net)
        .def_readonly("soc", &Schedule::soc);

    py::class_<AggregatorReport>(m, "AggregatorReport")
        .def_readonly("id", &AggregatorReport::id)
        .def_readonly("requested", &AggregatorReport::requested)
        .def_readonly("delivered", &AggregatorReport::delivered)
        .def_readonly("epsilon", &AggregatorReport::epsilon)
        .def_readonly("tracking_objective", &AggregatorReport::tracking_objective)
        .def_readonly("status", &AggregatorReport::status);

    py::class_<Metrics>(m, "Metrics")
        .def_readonly("epsilon_agg", &Metrics::epsilon_agg)
        .def_readonly("eta_agg", &Metrics::eta_agg)
        .def_readonly("objective_monolithic", &Metrics::objective_monolithic)
        .def_readonly("objective_hierarchical", &Metrics::objective_hierarchical)
        .def_readonly("objective_hier_planned", &Metrics::objective_hier_planned);

    py::class_<RunResult>(m, "RunResult")
        .def_readonly("has_monolithic", &RunResult::has_monolithic)
        .def_readonly("has_hierarchical", &RunResult::has_hierarchical)
        .def_readonly("ipf_baseline", &RunResult::ipf_baseline)
        .def_readonly("ipf_monolithic", &RunResult::ipf_monolithic)
        .def_readonly("ipf_hier_planned", &RunResult::ipf_hier_planned)
        .def_readonly("ipf_hier_realized", &RunResult::ipf_hier_realized)
        .def_readonly("per_aggregator", &RunResult::per_aggregator)
        .def_readonly("leaf_schedules", &RunResult::leaf_schedules)
        .def_readonly("monolithic_schedules", &RunResult::monolithic_schedules)
        .def_readonly("unit_ids", &RunResult::unit_ids)
        .def_readonly("monolithic_status", &RunResult::monolithic_status)
        .def_readonly("metrics", &RunResult::metrics);

    py::class_<SweepSpec>(m, "SweepSpec")
        .def(py::init<>())
        .def_readwrite("total_mw", &SweepSpec::total_mw)
        .def_readwrite("total_mwh", &SweepSpec::total_mwh)
        .def_readwrite("p1_values", &SweepSpec::p1_values)
        .def_readwrite("c1_min", &SweepSpec::c1_min)
        .def_readwrite("c1_max", &SweepSpec::c1_max)
        .def_readwrite("steps", &SweepSpec::steps)
        .def_readwrite("demand_variants", &SweepSpec::demand_variants);

    py::class_<SweepRow>(m, "SweepRow")
        .def_readonly("demand", &SweepRow::demand)
        .def_readonly("c1", &SweepRow::c1)
        .def_readonly("p1", &SweepRow::p1)
        .def_readonly("epsilon", &SweepRow::epsilon)
        .def_readonly("eta", &SweepRow::eta)
        .def_readonly("objective_monolithic", &SweepRow::objective_monolithic)
        .def_readonly("objective_hierarchical", &SweepRow::objective_hierarchical);

    py::class_<OracleReport>(m, "OracleReport")
        .def_readonly("failures", &OracleReport::failures)
        .def_readonly("seconds", &OracleReport::seconds)
        .def_property_readonly("instances", [](const OracleReport& r) { return r.checks.size(); });

    m.def("load_scenario", [](const std::filesystem::path& path) { return load_scenario(path).scenario; }, py::arg("path"),
          "Reads and validates a TOML scenario file.");
    m.def(
        "parse_scenario",
        [](const std::string& text, const std::filesystem::path& base_dir) { return parse_scenario(text, base_dir).scenario; },
        py::arg("text"), py::arg("base_dir") = std::filesystem::path("."));
    m.def("reference_scenario", [](const std::string& which) {
        if (which.size() != 1) throw InputError("reference scenario is one of 'a', 'b', 'c'");
        return reference_scenario(which[0]);
    });
    m.def("default_demand", &default_demand, py::arg("grid"), py::arg("amplitude"));
    m.def("capacity_split_scenario", &capacity_split_scenario, py::arg("base"), py::arg("p1"), py::arg("c1"),
          py::arg("total_mw") = 2.0, py::arg("total_mwh") = 2.0);
    m.def("load_timeseries_csv", &load_timeseries_csv, py::arg("path"), py::arg("grid"));
    m.def("write_timeseries_csv", &write_timeseries_csv, py::arg("path"), py::arg("series"));

    m.def("run", &run, py::arg("scenario"), py::arg("mode") = RunMode::Both, py::call_guard<py::gil_scoped_release>(),
          "Runs the requested coordination schemes and computes the metrics.");
    m.def("write_results", &write_results, py::arg("result"), py::arg("scenario"), py::arg("mode"), py::arg("dir"));
    m.def("metrics_json", &metrics_json, py::arg("result"), py::arg("scenario"), py::arg("mode"));
    m.def("run_sweep", &run_sweep, py::arg("base"), py::arg("spec"), py::call_guard<py::gil_scoped_release>());
    m.def("verify_oracle_equivalence", &verify_oracle_equivalence, py::arg("instances") = 200, py::arg("seed") = 1,
          py::arg("levels") = 21, py::call_guard<py::gil_scoped_release>());

    m.def("aggregation_error", &aggregation_error, py::arg("requested"), py::arg("delivered"));
    m.def("aggregation_efficiency", &aggregation_efficiency, py::arg("flex_hier"), py::arg("flex_mono"));
}
