#include "flexcoord/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flexcoord {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        std::ostringstream msg;
        msg << what << ": length mismatch (" << a << " vs " << b << ")";
        throw InputError(msg.str());
    }
}

}  // namespace

void validate_grid(const TimeGrid& grid) {
    if (grid.n_steps < 1) throw InputError("grid: n_steps must be >= 1");
    if (!(grid.dt_hours > 0.0) || !std::isfinite(grid.dt_hours)) throw InputError("grid: dt_hours must be > 0");
}

FpuLimits fpu_limits(const EssParams& params) { return {-params.p_max, params.p_max}; }

Timeseries operator+(const Timeseries& a, const Timeseries& b) {
    require_same_length(a.size(), b.size(), "timeseries sum");
    Timeseries out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) out[t] = a[t] + b[t];
    return out;
}

Timeseries operator-(const Timeseries& a, const Timeseries& b) {
    require_same_length(a.size(), b.size(), "timeseries difference");
    Timeseries out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) out[t] = a[t] - b[t];
    return out;
}

Timeseries operator-(const Timeseries& a) {
    Timeseries out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) out[t] = -a[t];
    return out;
}

Timeseries operator*(double k, const Timeseries& a) {
    Timeseries out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) out[t] = k * a[t];
    return out;
}

void require_series(const Timeseries& series, const TimeGrid& grid, const std::string& what) {
    if (series.size() != grid.n_steps) {
        std::ostringstream msg;
        msg << what << ": expected " << grid.n_steps << " values, got " << series.size();
        throw InputError(msg.str());
    }
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (!std::isfinite(series[t])) {
            std::ostringstream msg;
            msg << what << ": non-finite value at t=" << t;
            throw InputError(msg.str());
        }
    }
}

std::vector<double> Schedule::energy(double capacity) const {
    std::vector<double> e(soc.size());
    std::transform(soc.begin(), soc.end(), e.begin(), [capacity](double s) { return s * capacity; });
    return e;
}

Schedule zero_schedule(const EssParams& params, const TimeGrid& grid) {
    return make_schedule(params, grid, Timeseries(grid.n_steps), Timeseries(grid.n_steps));
}

Schedule make_schedule(const EssParams& params, const TimeGrid& grid, Timeseries p_chg, Timeseries p_dch) {
    Schedule s;
    s.soc = soc_propagate(params, grid, p_chg, p_dch);
    s.x_chg.resize(grid.n_steps);
    s.x_dch.resize(grid.n_steps);
    s.p_net = Timeseries(grid.n_steps);
    for (std::size_t t = 0; t < grid.n_steps; ++t) {
        s.x_chg[t] = p_chg[t] > 0.0 ? 1 : 0;
        s.x_dch[t] = p_dch[t] > 0.0 ? 1 : 0;
        s.p_net[t] = p_chg[t] - p_dch[t];
    }
    s.p_chg = std::move(p_chg);
    s.p_dch = std::move(p_dch);
    return s;
}

std::vector<std::string> validate_params(const EssParams& params) {
    std::vector<std::string> out;
    const std::string who = params.id.empty() ? std::string("unit") : "unit '" + params.id + "'";
    if (!(params.p_max >= 0.0) || !std::isfinite(params.p_max)) out.push_back(who + ": p_max must be >= 0");
    if (!(params.capacity > 0.0) || !std::isfinite(params.capacity)) out.push_back(who + ": capacity must be > 0");
    if (!(params.eta_chg > 0.0 && params.eta_chg <= 1.0)) out.push_back(who + ": eta_chg must be in (0, 1]");
    if (!(params.eta_dch > 0.0 && params.eta_dch <= 1.0)) out.push_back(who + ": eta_dch must be in (0, 1]");
    if (!(params.soc_initial >= 0.0 && params.soc_initial <= 1.0))
        out.push_back(who + ": soc_initial out of [0, 1]");
    return out;
}

void require_valid(const EssParams& params) {
    const auto violations = validate_params(params);
    if (violations.empty()) return;
    std::string msg;
    for (const auto& v : violations) {
        if (!msg.empty()) msg += "; ";
        msg += v;
    }
    throw InputError(msg);
}

std::vector<double> soc_propagate(const EssParams& params, const TimeGrid& grid, const Timeseries& p_chg,
                                  const Timeseries& p_dch) {
    require_same_length(p_chg.size(), grid.n_steps, "soc_propagate p_chg");
    require_same_length(p_dch.size(), grid.n_steps, "soc_propagate p_dch");
    std::vector<double> soc(grid.n_steps + 1);
    soc[0] = params.soc_initial;
    const double scale = grid.dt_hours / params.capacity;
    for (std::size_t i = 1; i <= grid.n_steps; ++i) {
        soc[i] = soc[i - 1] + (p_chg[i - 1] * params.eta_chg - p_dch[i - 1] / params.eta_dch) * scale;
    }
    return soc;
}

const char* to_string(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::Dimension: return "dimension";
        case ConstraintKind::ChargeBound: return "charge_bound";
        case ConstraintKind::DischargeBound: return "discharge_bound";
        case ConstraintKind::ChargeState: return "charge_state";
        case ConstraintKind::DischargeState: return "discharge_state";
        case ConstraintKind::Exclusivity: return "exclusivity";
        case ConstraintKind::NetPower: return "net_power";
        case ConstraintKind::Continuity: return "continuity";
        case ConstraintKind::SocLower: return "soc_lower";
        case ConstraintKind::SocUpper: return "soc_upper";
    }
    return "unknown";
}

std::vector<Violation> check_feasibility(const EssParams& params, const TimeGrid& grid, const Schedule& schedule,
                                         double tol) {
    std::vector<Violation> out;
    const std::size_t n = grid.n_steps;
    if (schedule.p_chg.size() != n || schedule.p_dch.size() != n || schedule.p_net.size() != n ||
        schedule.x_chg.size() != n || schedule.x_dch.size() != n || schedule.soc.size() != n + 1) {
        out.push_back({0, ConstraintKind::Dimension, 0.0});
        return out;
    }
    auto flag = [&](std::size_t t, ConstraintKind k, double magnitude) {
        if (magnitude > tol) out.push_back({t, k, magnitude});
    };
    for (std::size_t t = 0; t < n; ++t) {
        const double pc = schedule.p_chg[t];
        const double pd = schedule.p_dch[t];
        flag(t, ConstraintKind::ChargeBound, std::max(-pc, pc - params.p_max));
        flag(t, ConstraintKind::DischargeBound, std::max(-pd, pd - params.p_max));
        if (!schedule.x_chg[t]) flag(t, ConstraintKind::ChargeState, pc);
        if (!schedule.x_dch[t]) flag(t, ConstraintKind::DischargeState, pd);
        if (schedule.x_chg[t] && schedule.x_dch[t]) out.push_back({t, ConstraintKind::Exclusivity, 1.0});
        flag(t, ConstraintKind::NetPower, std::abs(schedule.p_net[t] - (pc - pd)));
    }
    const auto expected = soc_propagate(params, grid, schedule.p_chg, schedule.p_dch);
    for (std::size_t i = 0; i <= n; ++i) {
        flag(i, ConstraintKind::Continuity, std::abs(schedule.soc[i] - expected[i]));
        flag(i, ConstraintKind::SocLower, -schedule.soc[i]);
        flag(i, ConstraintKind::SocUpper, schedule.soc[i] - 1.0);
    }
    return out;
}

double pte_ratio(const EssParams& params) {
    if (!(params.capacity > 0.0)) throw InputError("pte_ratio: capacity must be > 0");
    return params.p_max / params.capacity;
}

Timeseries apply_flexibility(const Timeseries& p_forecast, const Timeseries& p_flex) {
    require_same_length(p_forecast.size(), p_flex.size(), "apply_flexibility");
    return p_forecast - p_flex;
}

}  // namespace flexcoord
