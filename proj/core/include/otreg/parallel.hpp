#pragma once

#include <cstddef>
#include <functional>

namespace otreg {

// Worker count used by parallel_for. Defaults to the hardware concurrency,
// capped by the OTREG_THREADS environment variable when set.
int thread_count();

// Splits [0, n) into contiguous ranges and runs fn(begin, end) on each, using
// a shared persistent pool. Callers must write only to per-index output slots:
// results are then bitwise independent of the thread count. Nested calls
// degrade to serial execution.
void parallel_for(std::ptrdiff_t n,
                  const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>& fn);

}  // namespace otreg
