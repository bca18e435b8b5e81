#pragma once

#include <cstddef>
#include <functional>

namespace blockprune {

/// Worker threads used by parallel loops. Read once from THANOS_THREADS;
/// unset or 0 means one per hardware thread.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Every index writes its own output, so results
/// do not depend on scheduling. If several calls throw, the exception from the
/// lowest index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace blockprune
