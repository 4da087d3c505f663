#pragma once

#include <cstddef>
#include <functional>

namespace grex {

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Work is split into
/// contiguous blocks; results must be written to per-index slots so that any
/// job count produces identical output. The first exception thrown by a body
/// is rethrown on the calling thread after all workers join. jobs <= 1 runs
/// inline.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& body);

}  // namespace grex
