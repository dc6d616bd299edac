#pragma once

#include <cstddef>
#include <functional>

namespace dipscan {

/// Worker count from DIPSCAN_THREADS, falling back to TOOL_THREADS
/// (0 or unset = hardware concurrency).
std::size_t thread_count();

/// Calls body(i) for i in [0, count). Work is split into contiguous chunks;
/// callers write results into preallocated slots indexed by i, so output is
/// independent of the schedule. The first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace dipscan
