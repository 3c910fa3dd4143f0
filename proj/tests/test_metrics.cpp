#include "doctest.h"

#include "flexcoord/metrics.hpp"

using namespace flexcoord;

TEST_CASE("aggregation error edge values") {
    const Timeseries req{1.0, -2.0, 0.5};
    CHECK(*aggregation_error(req, req) == 0.0);
    CHECK(*aggregation_error(req, Timeseries(3)) == doctest::Approx(1.0));
    CHECK_FALSE(aggregation_error(Timeseries(3), req).has_value());
    CHECK_THROWS_AS(aggregation_error(req, Timeseries(2)), InputError);
}

TEST_CASE("aggregation error is scale invariant") {
    const Timeseries req{1.0, -2.0, 0.5, 3.0};
    const Timeseries del{0.8, -2.0, 0.1, 2.5};
    const double e = *aggregation_error(req, del);
    // 0.04 + 0 + 0.16 + 0.25 over 1 + 4 + 0.25 + 9
    CHECK(e == doctest::Approx(0.45 / 14.25));
    for (double k : {-3.0, 1e-3, 250.0}) CHECK(*aggregation_error(k * req, k * del) == doctest::Approx(e).epsilon(1e-12));
}

TEST_CASE("aggregation efficiency") {
    const Timeseries mono{1.0, -1.0, 2.0};
    CHECK(*aggregation_efficiency(mono, mono) == 1.0);
    CHECK(*aggregation_efficiency(Timeseries{0.5, -0.5, 1.0}, mono) == doctest::Approx(0.5));
    CHECK(*aggregation_efficiency(Timeseries{2.0, -2.0, 2.0}, mono) == doctest::Approx(1.5));
    CHECK_FALSE(aggregation_efficiency(mono, Timeseries(3)).has_value());
    CHECK_THROWS_AS(aggregation_efficiency(mono, Timeseries(2)), InputError);
}
