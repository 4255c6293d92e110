#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace impactlab {

/// Runs fn(0..n-1) on up to `threads` workers. Each index must write only
/// its own output slot; the first exception thrown is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Explicit value if given, else IMPACTLAB_THREADS, else hardware concurrency.
int resolve_threads(std::optional<int> requested);

}  // namespace impactlab
