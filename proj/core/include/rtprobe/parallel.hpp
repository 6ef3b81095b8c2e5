#pragma once

#include <cstddef>
#include <functional>

namespace rtprobe {

/// Worker count from RTPROBE_WORKERS, else hardware concurrency (>= 1).
std::size_t worker_count();

/// Runs fn(0..n-1) on up to `workers` threads. Each index writes only its own
/// result slot, so output order never depends on scheduling. The exception of
/// the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace rtprobe
