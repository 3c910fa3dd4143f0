#include "flexcoord/scenario_io.hpp"

#include "flexcoord/parallel.hpp"
#include "flexcoord/reference.hpp"

#include <json.hpp>
#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace flexcoord {

namespace fs = std::filesystem;

namespace {

std::string location(const toml::node& node, const std::string& source) {
    const auto& begin = node.source().begin;
    if (begin.line == 0) return source + ": ";
    return source + ":" + std::to_string(begin.line) + ":" + std::to_string(begin.column) + ": ";
}

std::string read_file(const fs::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(std::string("cannot open ") + what + " '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    out.close();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Strict view on one TOML table: every key must be consumed before finish().
class Section {
public:
    Section(const toml::table& table, std::string prefix, const std::string& source)
        : table_(table), prefix_(std::move(prefix)), source_(source) {}

    const toml::node* get(const std::string& key) {
        used_.insert(key);
        return table_.get(key);
    }

    bool has(const std::string& key) const { return table_.contains(key); }

    std::string name(const std::string& key) const { return prefix_ + key; }

    [[noreturn]] void fail(const toml::node& at, const std::string& message) const {
        throw InputError(location(at, source_) + message);
    }
    [[noreturn]] void fail(const std::string& message) const {
        throw InputError(location(table_, source_) + message);
    }

    double number(const toml::node& node, const std::string& key) const {
        if (auto v = node.value_exact<double>()) return *v;
        if (auto v = node.value_exact<std::int64_t>()) return static_cast<double>(*v);
        fail(node, "'" + name(key) + "' must be a number");
    }

    std::optional<double> opt_double(const std::string& key) {
        const toml::node* n = get(key);
        if (!n) return std::nullopt;
        return number(*n, key);
    }

    double get_double(const std::string& key, double fallback, std::vector<std::string>& defaults) {
        if (auto v = opt_double(key)) return *v;
        defaults.push_back(name(key) + " = " + format_double(fallback));
        return fallback;
    }

    std::optional<std::int64_t> opt_int(const std::string& key) {
        const toml::node* n = get(key);
        if (!n) return std::nullopt;
        if (auto v = n->value_exact<std::int64_t>()) return *v;
        fail(*n, "'" + name(key) + "' must be an integer");
    }

    std::optional<std::string> opt_string(const std::string& key) {
        const toml::node* n = get(key);
        if (!n) return std::nullopt;
        if (auto v = n->value_exact<std::string>()) return *v;
        fail(*n, "'" + name(key) + "' must be a string");
    }

    std::optional<std::vector<double>> opt_numbers(const std::string& key) {
        const toml::node* n = get(key);
        if (!n) return std::nullopt;
        const toml::array* arr = n->as_array();
        if (!arr) fail(*n, "'" + name(key) + "' must be an array of numbers");
        std::vector<double> out;
        out.reserve(arr->size());
        for (const auto& e : *arr) out.push_back(number(e, key));
        return out;
    }

    std::optional<std::vector<std::vector<std::string>>> opt_string_lists(const std::string& key) {
        const toml::node* n = get(key);
        if (!n) return std::nullopt;
        const toml::array* outer = n->as_array();
        if (!outer) fail(*n, "'" + name(key) + "' must be an array of string arrays");
        std::vector<std::vector<std::string>> out;
        for (const auto& e : *outer) {
            const toml::array* inner = e.as_array();
            if (!inner) fail(e, "'" + name(key) + "' entries must be arrays of strings");
            std::vector<std::string> list;
            for (const auto& s : *inner) {
                auto v = s.value_exact<std::string>();
                if (!v) fail(s, "'" + name(key) + "' entries must be arrays of strings");
                list.push_back(*v);
            }
            out.push_back(std::move(list));
        }
        return out;
    }

    const toml::table* opt_table(const std::string& key) {
        const toml::node* n = get(key);
        if (!n) return nullptr;
        if (!n->is_table()) fail(*n, "'" + name(key) + "' must be a table");
        return n->as_table();
    }

    void finish() const {
        for (auto&& [k, v] : table_) {
            const std::string key(k.str());
            if (!used_.count(key)) fail(v, "unknown key '" + name(key) + "'");
        }
    }

private:
    const toml::table& table_;
    std::string prefix_;
    const std::string& source_;
    std::set<std::string> used_;
};

toml::table parse_toml(const std::string& text, const std::string& source) {
    try {
        return toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        const auto& b = e.source().begin;
        throw InputError(source + ":" + std::to_string(b.line) + ":" + std::to_string(b.column) + ": parse error: " +
                         std::string(e.description()));
    }
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

// A series given inline, by CSV path or (for constraints) as a constant.
Timeseries series_value(Section& sec, const toml::node& node, const std::string& key, const TimeGrid& grid,
                        const fs::path& base_dir) {
    if (auto s = node.value_exact<std::string>()) return load_timeseries_csv(resolve(base_dir, *s), grid);
    if (const toml::array* arr = node.as_array()) {
        std::vector<double> v;
        for (const auto& e : *arr) v.push_back(sec.number(e, key));
        if (v.size() != grid.n_steps) {
            sec.fail(node, "'" + sec.name(key) + "' has " + std::to_string(v.size()) + " values, expected " +
                               std::to_string(grid.n_steps));
        }
        return Timeseries(std::move(v));
    }
    return Timeseries(std::vector<double>(grid.n_steps, sec.number(node, key)));
}

std::size_t group_index(const std::string& id, std::size_t groups) {
    if (id.size() >= 2 && id[0] == 'g') {
        std::size_t k = 0;
        const auto* first = id.data() + 1;
        const auto* last = id.data() + id.size();
        auto [ptr, ec] = std::from_chars(first, last, k);
        if (ec == std::errc() && ptr == last && k >= 1 && k <= groups) return k - 1;
    }
    throw InputError("nest: unknown group '" + id + "' (groups are g1..g" + std::to_string(groups) + ")");
}

std::string toml_string(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string toml_float(double v) {
    std::string s = format_double(v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string toml_array(const Timeseries& series) {
    std::string out = "[";
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (t % 8 == 0) out += "\n    ";
        out += toml_float(series[t]);
        if (t + 1 < series.size()) out += ", ";
    }
    return out + "\n]";
}

std::string csv_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

nlohmann::ordered_json json_optional(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

nlohmann::ordered_json stats_json(const SolverStats& s) {
    nlohmann::ordered_json j;
    j["qp_solves"] = s.qp_solves;
    j["qp_iterations"] = s.qp_iterations;
    j["bnb_nodes"] = s.bnb_nodes;
    j["primal_residual"] = s.certificate.primal_residual;
    j["dual_residual"] = s.certificate.dual_residual;
    j["duality_gap"] = s.certificate.duality_gap;
    return j;
}

void append_schedules(std::string& out, const std::vector<std::string>& ids, const std::vector<Schedule>& schedules) {
    for (std::size_t u = 0; u < schedules.size(); ++u) {
        const Schedule& s = schedules[u];
        for (std::size_t t = 0; t < s.p_net.size(); ++t) {
            out += ids[u] + "," + std::to_string(t) + "," + format_double(s.p_chg[t]) + "," + format_double(s.p_dch[t]) +
                   "," + format_double(s.p_net[t]) + "," + format_double(s.soc[t + 1]) + "\n";
        }
    }
}

std::string unique_stem(const fs::path& p, std::set<std::string>& taken) {
    std::string stem = p.stem().string();
    if (stem.empty()) stem = "demand";
    std::string name = stem;
    for (int k = 2; !taken.insert(name).second; ++k) name = stem + "_" + std::to_string(k);
    return name;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

const char* to_string(RelaxationMode mode) {
    switch (mode) {
        case RelaxationMode::Auto: return "auto";
        case RelaxationMode::Always: return "always";
        case RelaxationMode::Never: return "never";
    }
    return "auto";
}

RelaxationMode parse_relaxation_mode(const std::string& text) {
    if (text == "auto") return RelaxationMode::Auto;
    if (text == "always") return RelaxationMode::Always;
    if (text == "never") return RelaxationMode::Never;
    throw InputError("unknown relaxation mode '" + text + "' (expected auto, always or never)");
}

const char* to_string(RunMode mode) {
    switch (mode) {
        case RunMode::Monolithic: return "monolithic";
        case RunMode::Hierarchical: return "hierarchical";
        case RunMode::Both: return "both";
    }
    return "both";
}

Timeseries parse_timeseries_csv(const std::string& text, const TimeGrid& grid, const std::string& source) {
    validate_grid(grid);
    std::vector<double> values;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            const auto comma = line.find(',');
            if (comma == std::string::npos || trim(line.substr(0, comma)) != "t" || trim(line.substr(comma + 1)) != "p_mw") {
                throw InputError(source + ": line " + std::to_string(line_no) + ": expected header 't,p_mw', got '" +
                                 line + "'");
            }
            header = true;
            continue;
        }
        const std::size_t row = values.size();
        const std::string where = source + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
            throw InputError(where + ": expected 2 comma-separated cells");
        }
        const std::string t_cell = trim(line.substr(0, comma));
        const std::string p_cell = trim(line.substr(comma + 1));
        std::size_t t = 0;
        auto [tp, tec] = std::from_chars(t_cell.data(), t_cell.data() + t_cell.size(), t);
        if (tec != std::errc() || tp != t_cell.data() + t_cell.size()) {
            throw InputError(where + ": non-integer step index '" + t_cell + "'");
        }
        if (t != row) throw InputError(where + ": step index " + t_cell + " out of order, expected " + std::to_string(row));
        double p = 0.0;
        auto [pp, pec] = std::from_chars(p_cell.data(), p_cell.data() + p_cell.size(), p);
        if (pec != std::errc() || pp != p_cell.data() + p_cell.size() || !std::isfinite(p)) {
            throw InputError(where + ": non-numeric value '" + p_cell + "'");
        }
        values.push_back(p);
    }
    if (!header) throw InputError(source + ": missing header 't,p_mw'");
    if (values.size() != grid.n_steps) {
        throw InputError(source + ": length mismatch, " + std::to_string(values.size()) + " rows for n_steps = " +
                         std::to_string(grid.n_steps));
    }
    return Timeseries(std::move(values));
}

Timeseries load_timeseries_csv(const fs::path& path, const TimeGrid& grid) {
    return parse_timeseries_csv(read_file(path, "timeseries"), grid, path.string());
}

void write_timeseries_csv(const fs::path& path, const Timeseries& series) {
    std::string out = "t,p_mw\n";
    for (std::size_t t = 0; t < series.size(); ++t) out += std::to_string(t) + "," + format_double(series[t]) + "\n";
    write_file(path, out);
}

LoadedScenario parse_scenario(const std::string& text, const fs::path& base_dir, const std::string& source) {
    const toml::table doc = parse_toml(text, source);
    LoadedScenario out;
    Scenario& s = out.scenario;
    auto& defaults = out.defaults;
    Section top(doc, "", source);

    if (auto name = top.opt_string("name")) {
        s.name = *name;
    } else {
        s.name = fs::path(source).stem().string();
        defaults.push_back("name = " + toml_string(s.name));
    }

    {
        const toml::table* t = top.opt_table("grid");
        const toml::table empty;
        Section grid(t ? *t : empty, "grid.", source);
        if (auto n = grid.opt_int("n_steps")) {
            if (*n < 1) grid.fail(*grid.get("n_steps"), "'grid.n_steps' must be >= 1");
            s.grid.n_steps = static_cast<std::size_t>(*n);
        } else {
            defaults.push_back("grid.n_steps = " + std::to_string(s.grid.n_steps));
        }
        s.grid.dt_hours = grid.get_double("dt_hours", s.grid.dt_hours, defaults);
        grid.finish();
        validate_grid(s.grid);
    }

    const std::size_t defaults_before_units = defaults.size();
    if (const toml::node* units = top.get("units")) {
        const toml::array* arr = units->as_array();
        if (!arr || !arr->is_array_of_tables()) top.fail(*units, "'units' must be an array of tables ([[units]])");
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const toml::table& ut = *(*arr)[i].as_table();
            const std::string prefix = "units[" + std::to_string(i) + "].";
            Section u(ut, prefix, source);
            EssParams p;
            auto id = u.opt_string("id");
            if (!id) u.fail(prefix + "id required");
            p.id = *id;
            auto p_max = u.opt_double("p_max_mw");
            if (!p_max) u.fail("unit '" + p.id + "': p_max required (key p_max_mw)");
            auto cap = u.opt_double("capacity_mwh");
            if (!cap) u.fail("unit '" + p.id + "': capacity required (key capacity_mwh)");
            p.p_max = *p_max;
            p.capacity = *cap;
            p.eta_chg = u.get_double("eta_chg", 1.0, defaults);
            p.eta_dch = u.get_double("eta_dch", 1.0, defaults);
            p.soc_initial = u.get_double("soc_initial", 0.5, defaults);
            u.finish();
            const auto problems = validate_params(p);
            if (!problems.empty()) u.fail(problems.front());
            s.units.push_back(std::move(p));
        }
    }
    {
        // "units[3].eta_chg = 1" lines become one line per key and value
        std::vector<std::pair<std::string, std::vector<std::string>>> merged;
        for (std::size_t k = defaults_before_units; k < defaults.size(); ++k) {
            const std::string& line = defaults[k];
            const auto close = line.find("].");
            const std::string index = line.substr(6, close - 6);
            const std::string setting = "units." + line.substr(close + 2);
            auto it = std::find_if(merged.begin(), merged.end(), [&](const auto& m) { return m.first == setting; });
            if (it == merged.end()) merged.push_back({setting, {index}});
            else it->second.push_back(index);
        }
        defaults.resize(defaults_before_units);
        for (const auto& [setting, indices] : merged) {
            std::string who = indices.size() == s.units.size() ? "all units" : "units";
            if (indices.size() != s.units.size()) {
                for (std::size_t k = 0; k < indices.size(); ++k) who += (k ? ", " : " ") + s.units[std::stoul(indices[k])].id;
            }
            defaults.push_back(setting + " (" + who + ")");
        }
    }

    std::optional<std::vector<std::vector<std::string>>> groups_by_id;
    std::optional<std::vector<std::vector<std::string>>> nest_by_id;
    std::vector<std::pair<std::string, const toml::node*>> constraint_nodes;
    const toml::table* constraints_table = nullptr;
    const toml::table empty;
    const toml::table* ht = top.opt_table("hierarchy");
    Section hier(ht ? *ht : empty, "hierarchy.", source);
    {
        if (auto mode = hier.opt_string("mode")) {
            s.mode = parse_aggregation_mode(*mode);
        } else {
            defaults.push_back(std::string("hierarchy.mode = \"") + to_string(s.mode) + "\"");
        }
        groups_by_id = hier.opt_string_lists("groups");
        const auto count = hier.opt_int("group_count");
        if (count && *count < 1) hier.fail(*hier.get("group_count"), "'hierarchy.group_count' must be >= 1");
        if (groups_by_id) {
            if (count && static_cast<std::size_t>(*count) != groups_by_id->size()) {
                hier.fail("'hierarchy.group_count' disagrees with the number of explicit groups");
            }
            s.group_count = groups_by_id->size();
        } else if (count) {
            s.group_count = static_cast<std::size_t>(*count);
        } else {
            defaults.push_back("hierarchy.group_count = " + std::to_string(s.group_count));
        }
        nest_by_id = hier.opt_string_lists("nest");
        constraints_table = hier.opt_table("constraints");
        hier.finish();
    }

    if (groups_by_id) {
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < s.units.size(); ++i) index[s.units[i].id] = i;
        std::vector<std::vector<std::size_t>> groups;
        for (const auto& g : *groups_by_id) {
            std::vector<std::size_t> members;
            for (const auto& id : g) {
                auto it = index.find(id);
                if (it == index.end()) throw InputError(source + ": hierarchy.groups references unknown unit '" + id + "'");
                members.push_back(it->second);
            }
            groups.push_back(std::move(members));
        }
        s.explicit_groups = std::move(groups);
    }
    if (nest_by_id) {
        for (const auto& level : *nest_by_id) {
            std::vector<std::size_t> members;
            for (const auto& id : level) members.push_back(group_index(id, s.group_count));
            s.nesting.push_back(std::move(members));
        }
    }
    if (constraints_table) {
        Section cons(*constraints_table, "hierarchy.constraints.", source);
        for (auto&& [k, v] : *constraints_table) {
            const std::string key(k.str());
            s.ipf_constraints[key] = series_value(cons, *cons.get(key), key, s.grid, base_dir);
        }
    }

    double fleet = 0.0;
    for (const auto& u : s.units) fleet += u.p_max;
    {
        const toml::table* dt = top.opt_table("demand");
        Section dem(dt ? *dt : empty, "demand.", source);
        const auto profile = dem.opt_string("profile");
        const toml::node* values = dem.get("values");
        const auto csv = dem.opt_string("csv");
        const auto amplitude = dem.opt_double("amplitude_mw");
        const int given = (profile ? 1 : 0) + (values ? 1 : 0) + (csv ? 1 : 0);
        if (given > 1) dem.fail("give only one of 'demand.profile', 'demand.values' and 'demand.csv'");
        if (amplitude && (values || csv)) dem.fail("'demand.amplitude_mw' only applies to the default profile");
        if (profile && *profile != "default") dem.fail("unknown demand profile '" + *profile + "' (expected \"default\")");
        if (values) {
            if (!values->is_array()) dem.fail(*values, "'demand.values' must be an array of numbers");
            s.baseline_ipf = series_value(dem, *values, "values", s.grid, base_dir);
        } else if (csv) {
            s.baseline_ipf = load_timeseries_csv(resolve(base_dir, *csv), s.grid);
        } else {
            if (!profile) defaults.push_back("demand.profile = \"default\"");
            if (!amplitude) defaults.push_back("demand.amplitude_mw = " + format_double(fleet));
            s.baseline_ipf = default_demand(s.grid, amplitude.value_or(fleet));
        }
        dem.finish();
    }

    {
        const toml::table* ot = top.opt_table("objective");
        Section obj(ot ? *ot : empty, "objective.", source);
        const auto kind = obj.opt_string("kind");
        const toml::node* target = obj.get("target");
        if (!kind || *kind == "flatten_ipf") {
            if (!kind) defaults.push_back("objective.kind = \"flatten_ipf\"");
            if (target) obj.fail(*target, "'objective.target' only applies to kind = \"track_demand\"");
        } else if (*kind == "track_demand") {
            if (!target) obj.fail("'objective.target' required for kind = \"track_demand\"");
            s.root_objective = RootObjective{RootObjective::Kind::TrackDemand,
                                             series_value(obj, *target, "target", s.grid, base_dir)};
        } else {
            obj.fail("unknown objective kind '" + *kind + "' (expected flatten_ipf or track_demand)");
        }
        obj.finish();
    }

    {
        const toml::table* st = top.opt_table("solver");
        Section sol(st ? *st : empty, "solver.", source);
        SolverOptions& o = s.solver;
        o.rel_opt_tol = sol.get_double("rel_opt_tol", o.rel_opt_tol, defaults);
        o.abs_feas_tol = sol.get_double("abs_feas_tol", o.abs_feas_tol, defaults);
        if (auto nodes = sol.opt_int("max_bnb_nodes")) {
            if (*nodes < 1 || *nodes > 100000000) sol.fail(*sol.get("max_bnb_nodes"), "'solver.max_bnb_nodes' out of range");
            o.max_bnb_nodes = static_cast<int>(*nodes);
        } else {
            defaults.push_back("solver.max_bnb_nodes = " + std::to_string(o.max_bnb_nodes));
        }
        if (auto relax = sol.opt_string("relaxation")) {
            o.relaxation = parse_relaxation_mode(*relax);
        } else {
            defaults.push_back(std::string("solver.relaxation = \"") + to_string(o.relaxation) + "\"");
        }
        o.regularization = sol.get_double("regularization", o.regularization, defaults);
        sol.finish();
    }

    {
        const toml::table* ot = top.opt_table("output");
        Section outp(ot ? *ot : empty, "output.", source);
        if (auto dir = outp.opt_string("directory")) out.output_dir = resolve(base_dir, *dir);
        outp.finish();
    }

    top.finish();
    try {
        validate_scenario(s);
    } catch (const InputError& e) {
        throw InputError(source + ": " + e.what());
    }
    return out;
}

LoadedScenario load_scenario(const fs::path& path) {
    return parse_scenario(read_file(path, "scenario"), path.parent_path(), path.string());
}

std::string scenario_to_toml(const Scenario& s) {
    std::string out;
    out += "name = " + toml_string(s.name) + "\n\n";
    out += "[grid]\nn_steps = " + std::to_string(s.grid.n_steps) + "\ndt_hours = " + toml_float(s.grid.dt_hours) + "\n";
    for (const auto& u : s.units) {
        out += "\n[[units]]\nid = " + toml_string(u.id) + "\np_max_mw = " + toml_float(u.p_max) +
               "\ncapacity_mwh = " + toml_float(u.capacity) + "\neta_chg = " + toml_float(u.eta_chg) +
               "\neta_dch = " + toml_float(u.eta_dch) + "\nsoc_initial = " + toml_float(u.soc_initial) + "\n";
    }
    out += "\n[hierarchy]\nmode = " + toml_string(to_string(s.mode)) + "\n";
    if (s.explicit_groups) {
        out += "groups = [";
        for (std::size_t g = 0; g < s.explicit_groups->size(); ++g) {
            out += g ? ", [" : "[";
            const auto& members = (*s.explicit_groups)[g];
            for (std::size_t k = 0; k < members.size(); ++k) out += (k ? ", " : "") + toml_string(s.units[members[k]].id);
            out += "]";
        }
        out += "]\n";
    } else {
        out += "group_count = " + std::to_string(s.group_count) + "\n";
    }
    if (!s.nesting.empty()) {
        out += "nest = [";
        for (std::size_t m = 0; m < s.nesting.size(); ++m) {
            out += m ? ", [" : "[";
            for (std::size_t k = 0; k < s.nesting[m].size(); ++k) {
                out += (k ? ", " : "") + toml_string("g" + std::to_string(s.nesting[m][k] + 1));
            }
            out += "]";
        }
        out += "]\n";
    }
    if (!s.ipf_constraints.empty()) {
        out += "\n[hierarchy.constraints]\n";
        for (const auto& [node, bound] : s.ipf_constraints) out += toml_string(node) + " = " + toml_array(bound) + "\n";
    }
    out += "\n[demand]\nvalues = " + toml_array(s.baseline_ipf) + "\n";
    out += "\n[objective]\n";
    if (s.root_objective.kind == RootObjective::Kind::TrackDemand) {
        out += "kind = \"track_demand\"\ntarget = " + toml_array(s.root_objective.target) + "\n";
    } else {
        out += "kind = \"flatten_ipf\"\n";
    }
    const SolverOptions& o = s.solver;
    out += "\n[solver]\nrel_opt_tol = " + toml_float(o.rel_opt_tol) + "\nabs_feas_tol = " + toml_float(o.abs_feas_tol) +
           "\nmax_bnb_nodes = " + std::to_string(o.max_bnb_nodes) + "\nrelaxation = " + toml_string(to_string(o.relaxation)) +
           "\nregularization = " + toml_float(o.regularization) + "\n";
    return out;
}

std::string metrics_json(const RunResult& r, const Scenario& scenario, RunMode mode) {
    nlohmann::ordered_json j;
    j["scenario"] = scenario.name;
    j["mode"] = to_string(mode);
    j["n_units"] = scenario.units.size();
    j["n_steps"] = scenario.grid.n_steps;
    j["dt_hours"] = scenario.grid.dt_hours;
    j["epsilon_agg"] = json_optional(r.metrics.epsilon_agg);
    j["eta_agg"] = json_optional(r.metrics.eta_agg);

    nlohmann::ordered_json obj;
    obj["baseline"] = root_objective_value(scenario, r.ipf_baseline);
    obj["monolithic"] = r.has_monolithic ? nlohmann::ordered_json(r.metrics.objective_monolithic) : nullptr;
    obj["hierarchical_planned"] =
        r.has_hierarchical ? nlohmann::ordered_json(r.metrics.objective_hier_planned) : nullptr;
    obj["hierarchical_realized"] =
        r.has_hierarchical ? nlohmann::ordered_json(r.metrics.objective_hierarchical) : nullptr;
    j["objective"] = obj;

    nlohmann::ordered_json aggregators = nlohmann::ordered_json::array();
    for (const auto& a : r.per_aggregator) {
        nlohmann::ordered_json e;
        e["id"] = a.id;
        e["epsilon"] = json_optional(a.epsilon);
        e["tracking_objective"] = a.tracking_objective;
        e["solver_objective"] = json_optional(a.solver_objective);
        e["status"] = to_string(a.status);
        e["stats"] = stats_json(a.stats);
        aggregators.push_back(e);
    }
    j["aggregators"] = aggregators;
    if (r.has_monolithic && !scenario.units.empty()) {
        nlohmann::ordered_json m;
        m["status"] = to_string(r.monolithic_status);
        m["stats"] = stats_json(r.monolithic_stats);
        j["monolithic"] = m;
    } else {
        j["monolithic"] = nullptr;
    }
    return j.dump(2) + "\n";
}

void write_results(const RunResult& r, const Scenario& scenario, RunMode mode, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());

    std::string ipf = "t,ipf_baseline,ipf_monolithic,ipf_hier_planned,ipf_hier_realized\n";
    auto cell = [](bool present, const Timeseries& s, std::size_t t) { return present ? format_double(s[t]) : ""; };
    for (std::size_t t = 0; t < r.ipf_baseline.size(); ++t) {
        ipf += std::to_string(t) + "," + format_double(r.ipf_baseline[t]) + "," + cell(r.has_monolithic, r.ipf_monolithic, t) +
               "," + cell(r.has_hierarchical, r.ipf_hier_planned, t) + "," +
               cell(r.has_hierarchical, r.ipf_hier_realized, t) + "\n";
    }
    write_file(dir / "ipf.csv", ipf);

    const std::string header = "unit,t,p_chg,p_dch,p_net,soc\n";
    std::string schedules = header;
    append_schedules(schedules, r.unit_ids, r.has_hierarchical ? r.leaf_schedules : r.monolithic_schedules);
    write_file(dir / "schedules.csv", schedules);
    if (r.has_hierarchical && r.has_monolithic) {
        std::string mono = header;
        append_schedules(mono, r.unit_ids, r.monolithic_schedules);
        write_file(dir / "schedules_monolithic.csv", mono);
    }
    write_file(dir / "metrics.json", metrics_json(r, scenario, mode));
    write_file(dir / "scenario.resolved.toml", scenario_to_toml(scenario));
}

SweepSpec parse_sweep_spec(const std::string& text, const fs::path& base_dir, const std::string& source) {
    const toml::table doc = parse_toml(text, source);
    Section top(doc, "", source);
    const toml::table* st = top.opt_table("sweep");
    if (!st) top.fail("missing [sweep] table");
    top.finish();
    Section sec(*st, "sweep.", source);
    SweepSpec spec;
    std::vector<std::string> unused;
    if (auto p = sec.opt_string("parameter"); p && *p != "capacity_split") {
        sec.fail("unknown sweep parameter '" + *p + "' (expected capacity_split)");
    }
    spec.total_mw = sec.get_double("total_mw", spec.total_mw, unused);
    spec.total_mwh = sec.get_double("total_mwh", spec.total_mwh, unused);
    if (auto p1 = sec.opt_numbers("p1_values")) spec.p1_values = *p1;
    spec.c1_min = sec.get_double("c1_min", spec.c1_min, unused);
    spec.c1_max = sec.get_double("c1_max", spec.c1_max, unused);
    if (auto steps = sec.opt_int("steps")) {
        if (*steps < 2) sec.fail(*sec.get("steps"), "'sweep.steps' must be >= 2");
        spec.steps = static_cast<std::size_t>(*steps);
    }
    if (const toml::node* dv = sec.get("demand_variants")) {
        const toml::array* arr = dv->as_array();
        if (!arr) sec.fail(*dv, "'sweep.demand_variants' must be an array of paths");
        for (const auto& e : *arr) {
            auto path = e.value_exact<std::string>();
            if (!path) sec.fail(e, "'sweep.demand_variants' must be an array of paths");
            spec.demand_variants.push_back(resolve(base_dir, *path));
        }
    }
    sec.finish();

    if (!(spec.total_mw > 0.0) || !(spec.total_mwh > 0.0)) sec.fail("sweep totals must be > 0");
    if (spec.p1_values.empty()) sec.fail("'sweep.p1_values' must not be empty");
    for (double p1 : spec.p1_values) {
        if (p1 < 0.0 || p1 > spec.total_mw) sec.fail("p1 value " + format_double(p1) + " outside [0, total_mw]");
    }
    if (!(spec.c1_min >= 0.0 && spec.c1_min < spec.c1_max && spec.c1_max <= spec.total_mwh)) {
        sec.fail("need 0 <= c1_min < c1_max <= total_mwh");
    }
    return spec;
}

SweepSpec load_sweep_spec(const fs::path& path) {
    return parse_sweep_spec(read_file(path, "sweep spec"), path.parent_path(), path.string());
}

std::vector<double> sweep_c1_values(const SweepSpec& spec) {
    if (spec.steps < 2) throw InputError("sweep: steps must be >= 2");
    std::vector<double> c1(spec.steps);
    const double span = spec.c1_max - spec.c1_min;
    for (std::size_t k = 0; k < spec.steps; ++k) {
        // mirrored points come out exactly mirrored when the range is symmetric
        const double f = static_cast<double>(k) / static_cast<double>(spec.steps - 1);
        c1[k] = k + 1 == spec.steps ? spec.c1_max : spec.c1_min + span * f;
    }
    return c1;
}

std::vector<SweepRow> run_sweep(const Scenario& base, const SweepSpec& spec) {
    validate_scenario(base);
    std::vector<std::pair<std::string, Timeseries>> demands;
    if (spec.demand_variants.empty()) {
        demands.emplace_back(base.name, base.baseline_ipf);
    } else {
        std::set<std::string> taken;
        for (const auto& p : spec.demand_variants) demands.emplace_back(unique_stem(p, taken), load_timeseries_csv(p, base.grid));
    }
    const std::vector<double> c1 = sweep_c1_values(spec);
    const std::size_t per_demand = spec.p1_values.size() * c1.size();
    std::vector<SweepRow> rows(demands.size() * per_demand);
    parallel_for(rows.size(), [&](std::size_t i) {
        const std::size_t d = i / per_demand;
        const std::size_t p = (i % per_demand) / c1.size();
        const std::size_t k = i % c1.size();
        Scenario s = base;
        s.baseline_ipf = demands[d].second;
        s = capacity_split_scenario(s, spec.p1_values[p], c1[k], spec.total_mw, spec.total_mwh);
        const RunResult r = run(s, RunMode::Both);
        SweepRow& row = rows[i];
        row.demand = demands[d].first;
        row.c1 = c1[k];
        row.p1 = spec.p1_values[p];
        row.epsilon = r.metrics.epsilon_agg;
        row.eta = r.metrics.eta_agg;
        row.objective_monolithic = r.metrics.objective_monolithic;
        row.objective_hierarchical = r.metrics.objective_hierarchical;
    });
    return rows;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
    std::string out = "demand,c1_mwh,p1_mw,epsilon,eta,objective_monolithic,objective_hierarchical\n";
    for (const auto& r : rows) {
        out += r.demand + "," + format_double(r.c1) + "," + format_double(r.p1) + "," + csv_optional(r.epsilon) + "," +
               csv_optional(r.eta) + "," + format_double(r.objective_monolithic) + "," +
               format_double(r.objective_hierarchical) + "\n";
    }
    write_file(path, out);
}

std::vector<DemandStudyRow> run_demand_study(const Scenario& base, const std::vector<fs::path>& demands,
                                             const fs::path& dir) {
    if (demands.empty()) throw InputError("demand study: no demand series given");
    validate_scenario(base);
    std::set<std::string> taken;
    std::vector<DemandStudyRow> rows;
    std::vector<Scenario> scenarios;
    for (const auto& p : demands) {
        DemandStudyRow row;
        row.demand = unique_stem(p, taken);
        Scenario s = base;
        s.baseline_ipf = load_timeseries_csv(p, base.grid);
        s.name = base.name + "_" + row.demand;
        scenarios.push_back(std::move(s));
        rows.push_back(row);
    }
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const RunResult r = run(scenarios[i], RunMode::Both);
        write_results(r, scenarios[i], RunMode::Both, dir / rows[i].demand);
        rows[i].epsilon = r.metrics.epsilon_agg;
        rows[i].eta = r.metrics.eta_agg;
        rows[i].objective_baseline = root_objective_value(scenarios[i], scenarios[i].baseline_ipf);
        rows[i].objective_monolithic = r.metrics.objective_monolithic;
        rows[i].objective_hierarchical = r.metrics.objective_hierarchical;
    }
    std::string out = "demand,epsilon,eta,objective_baseline,objective_monolithic,objective_hierarchical\n";
    for (const auto& r : rows) {
        out += r.demand + "," + csv_optional(r.epsilon) + "," + csv_optional(r.eta) + "," +
               format_double(r.objective_baseline) + "," + format_double(r.objective_monolithic) + "," +
               format_double(r.objective_hierarchical) + "\n";
    }
    write_file(dir / "demand_study.csv", out);
    return rows;
}

}  // namespace flexcoord
