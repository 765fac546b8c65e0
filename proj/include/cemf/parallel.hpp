#pragma once

#include <cstddef>
#include <functional>

namespace cemf {

// Runs body(k) for k in [0, count) on up to `threads` workers (0 = hardware
// concurrency).  Work items are claimed dynamically; callers write results
// into per-index slots and reduce afterwards in index order so the outcome
// does not depend on the thread count.  The first exception thrown by any
// worker is rethrown on the calling thread.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

} // namespace cemf
