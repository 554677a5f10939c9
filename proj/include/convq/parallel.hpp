#pragma once

#include <cstddef>
#include <functional>

namespace convq {

/// Worker threads used by parallel loops. Defaults to the CONVQ_WORKERS
/// environment variable, or 1 when unset.
std::size_t worker_count();
void set_worker_count(std::size_t n);

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; the
/// first exception thrown is rethrown after all workers finish. Callers
/// write results into per-index slots so output is schedule independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace convq
