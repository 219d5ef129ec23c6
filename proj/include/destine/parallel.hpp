#pragma once

#include <functional>

namespace destine {

// Worker count: DESTINE_THREADS when set, else min(hardware, 8), at least 1.
int worker_count();

// Runs fn(0..n-1) on worker threads. Exceptions are rethrown on the caller,
// lowest index first, so failure reporting is deterministic.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace destine
