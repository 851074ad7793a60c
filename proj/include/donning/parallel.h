#pragma once

#include <functional>

namespace donning {

// Worker count from DONNING_WORKERS, else the hardware concurrency (>= 1).
int DefaultWorkerCount();

// Runs fn(i) for i in [0, count) on up to `workers` threads. Work items are
// independent; callers write results by index so ordering never matters.
// The first exception thrown by any item is rethrown after all threads join.
void ParallelFor(int count, int workers, const std::function<void(int)>& fn);

}  // namespace donning
