#pragma once

#include <cstddef>
#include <functional>

namespace refpaint {

/// Worker cap: REFPAINT_THREADS if set (>= 1), otherwise the hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Work is split
/// into contiguous chunks, so results written by index are independent of the
/// thread count. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace refpaint
