#pragma once

#include <cstdint>
#include <functional>

namespace volres {

// Worker cap from VOLRES_THREADS (0 or unset = hardware concurrency).
int thread_budget();

// Runs fn(begin, end) over disjoint contiguous chunks of [0, count).
// Callers must only parallelize partitionable work: each index writes its
// own output slots, so the result is bitwise identical to the serial order.
// Work below min_chunk stays on the calling thread.
void parallel_for(std::int64_t count, std::int64_t min_chunk,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace volres
