#pragma once

#include "flexcoord/core.hpp"

#include <optional>

namespace flexcoord {

struct Metrics {
    std::optional<double> epsilon_agg;  // root aggregation error
    std::optional<double> eta_agg;      // hierarchical vs monolithic flexibility use
    double objective_monolithic = 0.0;
    double objective_hierarchical = 0.0;
    double objective_hier_planned = 0.0;
};

/// Normalized squared mismatch between requested and delivered flexibility.
/// Empty when the request is identically zero (the ratio is undefined).
std::optional<double> aggregation_error(const Timeseries& requested, const Timeseries& delivered);

/// Total absolute hierarchical flexibility over total absolute monolithic
/// flexibility. Empty when the monolithic scheme moves no flexibility.
/// Not clamped to 1.
std::optional<double> aggregation_efficiency(const Timeseries& flex_hier, const Timeseries& flex_mono);

}  // namespace flexcoord
