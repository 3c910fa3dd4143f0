#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flexcoord {

/// Raised for malformed or inconsistent inputs (bad parameters, length
/// mismatches, unreadable files). Maps to CLI exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a dispatch problem cannot be solved (contradictory coupling
/// bounds, numerical breakdown). Maps to CLI exit code 2.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TimeGrid {
    std::size_t n_steps = 96;
    double dt_hours = 0.25;

    double horizon_hours() const { return static_cast<double>(n_steps) * dt_hours; }
};

void validate_grid(const TimeGrid& grid);

/// Physical description of one storage unit. Powers in MW, capacity in MWh,
/// state of charge relative to capacity.
struct EssParams {
    std::string id;
    double p_max = 0.0;
    double capacity = 1.0;
    double eta_chg = 1.0;
    double eta_dch = 1.0;
    double soc_initial = 0.5;

    double energy_initial() const { return soc_initial * capacity; }
};

/// Active power band of a generic flexibility providing unit.
struct FpuLimits {
    double p_min = 0.0;
    double p_max = 0.0;
};

FpuLimits fpu_limits(const EssParams& params);

/// Power series over a time grid (MW).
class Timeseries {
public:
    Timeseries() = default;
    explicit Timeseries(std::size_t n, double value = 0.0) : values_(n, value) {}
    explicit Timeseries(std::vector<double> values) : values_(std::move(values)) {}
    Timeseries(std::initializer_list<double> values) : values_(values) {}

    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    double operator[](std::size_t t) const { return values_[t]; }
    double& operator[](std::size_t t) { return values_[t]; }

    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }
    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }

    std::span<const double> view() const { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const Timeseries&) const = default;

private:
    std::vector<double> values_;
};

Timeseries operator+(const Timeseries& a, const Timeseries& b);
Timeseries operator-(const Timeseries& a, const Timeseries& b);
Timeseries operator-(const Timeseries& a);
Timeseries operator*(double k, const Timeseries& a);

/// Throws InputError when the series does not match the grid or has
/// non-finite entries. `what` names the series in the message.
void require_series(const Timeseries& series, const TimeGrid& grid, const std::string& what);

/// Per-step dispatch of one (possibly virtual) storage unit.
struct Schedule {
    Timeseries p_chg;
    Timeseries p_dch;
    std::vector<std::uint8_t> x_chg;
    std::vector<std::uint8_t> x_dch;
    Timeseries p_net;
    std::vector<double> soc;  // n_steps + 1 entries, soc[0] is the initial state

    std::size_t n_steps() const { return p_net.size(); }
    std::vector<double> energy(double capacity) const;
};

/// Idle schedule of `params` over `grid`.
Schedule zero_schedule(const EssParams& params, const TimeGrid& grid);

/// Builds a schedule from charge and discharge powers: derives the binary
/// states, the net power and the SoC trajectory.
Schedule make_schedule(const EssParams& params, const TimeGrid& grid, Timeseries p_chg, Timeseries p_dch);

// Returns one message per violated invariant; empty when valid.
std::vector<std::string> validate_params(const EssParams& params);

/// Throws InputError listing every violation.
void require_valid(const EssParams& params);

/// SoC trajectory with soc[0] = soc_initial. Does not clamp.
std::vector<double> soc_propagate(const EssParams& params, const TimeGrid& grid, const Timeseries& p_chg,
                                  const Timeseries& p_dch);

enum class ConstraintKind {
    Dimension,
    ChargeBound,
    DischargeBound,
    ChargeState,
    DischargeState,
    Exclusivity,
    NetPower,
    Continuity,
    SocLower,
    SocUpper,
};

const char* to_string(ConstraintKind kind);

struct Violation {
    std::size_t step = 0;
    ConstraintKind constraint = ConstraintKind::Dimension;
    double magnitude = 0.0;
};

std::vector<Violation> check_feasibility(const EssParams& params, const TimeGrid& grid, const Schedule& schedule,
                                         double tol = 1e-6);

/// Power-to-energy ratio in 1/h.
double pte_ratio(const EssParams& params);

/// Elementwise forecast minus flexibility.
Timeseries apply_flexibility(const Timeseries& p_forecast, const Timeseries& p_flex);

}  // namespace flexcoord
