#pragma once

#include <cstddef>
#include <functional>

namespace triplet {

// Upper bound on worker threads for point-parallel sweeps. Defaults to the
// TRIPLET_SENSE_THREADS environment variable, else hardware concurrency.
int max_threads();
void set_max_threads(int n);

// Calls fn(i) for i in [0, n). Each index is evaluated exactly once and the
// results must not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace triplet
