#pragma once

#include <functional>

namespace simulrl {

// Number of hardware threads (at least 1).
int default_workers();

// Runs fn(0..n-1) on up to `workers` threads. Callers write results into
// per-index slots and reduce them in index order, so output never depends on
// the worker count. The first exception thrown by any item is rethrown.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace simulrl
