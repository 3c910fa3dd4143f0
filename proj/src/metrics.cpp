#include "flexcoord/metrics.hpp"

#include <cmath>

namespace flexcoord {

std::optional<double> aggregation_error(const Timeseries& requested, const Timeseries& delivered) {
    if (requested.size() != delivered.size()) throw InputError("aggregation_error: length mismatch");
    double residual = 0.0, norm = 0.0;
    for (std::size_t t = 0; t < requested.size(); ++t) {
        const double d = requested[t] - delivered[t];
        residual += d * d;
        norm += requested[t] * requested[t];
    }
    if (norm == 0.0) return std::nullopt;
    return residual / norm;
}

std::optional<double> aggregation_efficiency(const Timeseries& flex_hier, const Timeseries& flex_mono) {
    if (flex_hier.size() != flex_mono.size()) throw InputError("aggregation_efficiency: length mismatch");
    double hier = 0.0, mono = 0.0;
    for (std::size_t t = 0; t < flex_hier.size(); ++t) {
        hier += std::abs(flex_hier[t]);
        mono += std::abs(flex_mono[t]);
    }
    if (mono == 0.0) return std::nullopt;
    return hier / mono;
}

}  // namespace flexcoord
