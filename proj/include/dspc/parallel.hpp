#pragma once

#include <cstdint>
#include <functional>

namespace dspc {

// Worker cap for internal parallelism. Reads DEEPSPEC_THREADS once; defaults
// to 1 (fully serial). Values are clamped to [1, 256].
int max_threads();

// Runs fn(begin, end) over a partition of [0, n) into contiguous ranges, one
// per worker. Each index is processed by exactly one worker and the order
// inside a range is fixed, so outputs are bit-identical for any worker count
// as long as ranges write disjoint locations.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace dspc
