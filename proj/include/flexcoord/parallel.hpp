#pragma once

#include <cstddef>
#include <functional>

namespace flexcoord {

/// Worker cap: FLEXCOORD_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t thread_limit();

/// Runs fn(i) for i in [0, n) on up to thread_limit() threads. Each index is
/// processed exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The exception of the lowest failing index is
/// rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace flexcoord
