#include "flexcoord/reference.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace flexcoord {

namespace {

// (hour of day, fraction of the evening peak)
constexpr std::array<std::pair<double, double>, 12> kDayShape{{
    {0.0, 0.30},
    {3.0, 0.20},
    {6.0, 0.40},
    {8.0, 0.75},
    {10.0, 0.20},
    {12.0, -0.40},
    {14.0, -0.30},
    {16.0, 0.20},
    {18.0, 0.80},
    {20.0, 1.00},
    {22.0, 0.60},
    {24.0, 0.30},
}};

double day_shape(double hour) {
    hour = std::fmod(hour, 24.0);
    if (hour < 0.0) hour += 24.0;
    for (std::size_t k = 1; k < kDayShape.size(); ++k) {
        const auto [h1, v1] = kDayShape[k];
        if (hour <= h1) {
            const auto [h0, v0] = kDayShape[k - 1];
            return v0 + (v1 - v0) * (hour - h0) / (h1 - h0);
        }
    }
    return kDayShape.back().second;
}

// Fast load fluctuation on top of the day shape. Without it the fleet never
// runs into its per-unit power and energy limits at the same time.
constexpr double kRipplePeriodHours = 4.0;
constexpr double kRippleFraction = 1.0;

double ripple(double hour) {
    return kRippleFraction * std::sin(2.0 * M_PI * hour / kRipplePeriodHours);
}

EssParams ess(std::string id, double p_max, double capacity) {
    return EssParams{std::move(id), p_max, capacity, 1.0, 1.0, 0.5};
}

}  // namespace

Timeseries default_demand(const TimeGrid& grid, double amplitude) {
    validate_grid(grid);
    Timeseries d(grid.n_steps);
    for (std::size_t t = 0; t < grid.n_steps; ++t) {
        // sample at the interval midpoint
        const double hour = (static_cast<double>(t) + 0.5) * grid.dt_hours;
        d[t] = amplitude * (day_shape(hour) + ripple(hour));
    }
    return d;
}

Scenario reference_scenario(char which) {
    Scenario s;
    s.grid = TimeGrid{96, 0.25};
    s.group_count = 2;
    switch (which) {
        case 'a':
            s.name = "scenario_a";
            s.units = {ess("1", 1.3, 0.4), ess("2", 0.7, 1.6), ess("3", 1.3, 0.4), ess("4", 0.7, 1.6)};
            s.mode = AggregationMode::Heterogeneous;
            break;
        case 'b':
            s.name = "scenario_b";
            s.units = {ess("1", 1.3, 0.4), ess("2", 1.3, 0.4), ess("3", 0.7, 1.6), ess("4", 0.7, 1.6)};
            s.mode = AggregationMode::Homogeneous;
            break;
        case 'c':
            s.name = "scenario_c";
            s.units = {ess("1", 0.4, 0.4), ess("2", 1.6, 1.6), ess("3", 0.4, 0.4), ess("4", 1.6, 1.6)};
            s.mode = AggregationMode::Heterogeneous;
            s.explicit_groups = std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}};
            break;
        default: throw InputError(std::string("unknown reference scenario '") + which + "'");
    }
    double fleet = 0.0;
    for (const auto& u : s.units) fleet += u.p_max;
    s.baseline_ipf = default_demand(s.grid, fleet);
    return s;
}

Scenario capacity_split_scenario(const Scenario& base, double p1, double c1, double total_mw, double total_mwh) {
    if (!(total_mw > 0.0) || !(total_mwh > 0.0)) throw InputError("capacity split: totals must be > 0");
    if (p1 < 0.0 || p1 > total_mw) throw InputError("capacity split: p1 outside [0, total_mw]");
    if (c1 < 0.0 || c1 > total_mwh) throw InputError("capacity split: c1 outside [0, total_mwh]");
    Scenario s = base;
    s.units.clear();
    s.ipf_constraints.clear();
    s.nesting.clear();
    const std::size_t groups = std::max<std::size_t>(1, base.group_count);
    EssParams proto = base.units.empty() ? ess("", 0.0, 1.0) : base.units.front();
    std::vector<std::vector<std::size_t>> membership(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::string prefix = "g" + std::to_string(g + 1) + "u";
        const double c2 = total_mwh - c1;
        const std::pair<double, double> parts[2] = {{p1, c1}, {total_mw - p1, c2}};
        for (int k = 0; k < 2; ++k) {
            if (parts[k].second <= 0.0) continue;
            EssParams u = proto;
            u.id = prefix + std::to_string(k + 1);
            u.p_max = parts[k].first;
            u.capacity = parts[k].second;
            membership[g].push_back(s.units.size());
            s.units.push_back(u);
        }
    }
    s.explicit_groups = membership;
    s.group_count = groups;
    return s;
}

}  // namespace flexcoord
