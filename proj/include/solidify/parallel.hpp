#pragma once

#include <cstddef>
#include <functional>

namespace solidify {

// Worker count: SOLIDIFY_THREADS if set, else hardware concurrency.
unsigned worker_count();

// Runs body(i) for i in [0,n).  Results must be written by index so the
// outcome does not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace solidify
