#pragma once

#include <cstddef>
#include <functional>

namespace octcal {

/// Process-wide default worker count; 0 means "ask the environment".
void set_default_threads(int threads);

/// `requested` > 0 wins, then the process default, then OCT_HANDEYE_THREADS,
/// then the hardware concurrency.
int resolve_threads(int requested = 0);

/// Runs body(i) for i in [0, n) over contiguous chunks. Results must be written
/// to per-index slots so the outcome does not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace octcal
