#pragma once

#include <cstddef>
#include <functional>

namespace sbglm {

/// Worker count from the SBGLM_THREADS environment variable, else the hardware
/// concurrency (at least 1).
int default_threads();

/// Calls fn(i) for i in [0, count) on up to `threads` workers (0 = default).
/// Work is split into contiguous chunks; the first exception thrown by any
/// worker is rethrown after all workers finish.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace sbglm
