#pragma once

#include <cstddef>
#include <functional>

namespace lumina {

/// Worker count: LUMINA_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Exceptions from
/// workers are rethrown on the calling thread (the first one by index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lumina
