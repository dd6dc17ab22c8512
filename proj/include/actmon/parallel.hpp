#pragma once

#include <cstddef>
#include <functional>

namespace actmon {

/// Worker count: ACTMON_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t thread_count();

/// Calls body(i) for every i in [0, n), split into contiguous chunks over
/// up to thread_count() threads. Bodies must only write to slot i of their
/// outputs; the first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace actmon
