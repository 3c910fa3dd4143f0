#pragma once

#include "flexcoord/coordination.hpp"

namespace flexcoord {

/// Synthetic day-shaped non-flexible demand: night trough, morning peak,
/// midday PV surplus, evening peak. Piecewise linear between anchors and
/// repeated every 24 h, plus a sinusoidal ripple with a 4 h period. Both the
/// day shape's evening peak and the ripple amplitude equal `amplitude` MW.
Timeseries default_demand(const TimeGrid& grid, double amplitude);

/// The four-unit storage fleets of the reference study. 'a' pairs high and
/// low PtE units, 'b' pairs identical units, 'c' uses PtE = 1 throughout.
/// Defaults: 96 steps of 0.25 h, unit efficiency, SoC 0.5, default demand
/// scaled to the 4 MW fleet power.
Scenario reference_scenario(char which);

/// Two groups of two units; within each group unit 1 has (p1, c1) and unit 2
/// has (total_mw - p1, total_mwh - c1). A unit with zero capacity is left
/// out, so its group holds a single unit and aggregates losslessly.
Scenario capacity_split_scenario(const Scenario& base, double p1, double c1, double total_mw, double total_mwh);

}  // namespace flexcoord
