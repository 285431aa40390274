#pragma once

#include <cstddef>
#include <functional>

namespace diffeo {

/// Worker count: DIFFEO_OP_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
unsigned worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Items are
/// claimed dynamically; the exception of the lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace diffeo
