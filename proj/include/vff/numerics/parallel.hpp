#pragma once

#include <cstddef>
#include <functional>

namespace vff {

/// Runs fn(0..n-1) on up to `threads` worker threads (0 means hardware
/// concurrency). Each index runs exactly once; callers write results into
/// index-owned slots so the outcome does not depend on the thread count.
/// The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace vff
