#pragma once

#include <cstdint>
#include <functional>

namespace bdc {

/// Thread cap from BDC_THREADS (default 1 for determinism).
int thread_budget();

/// Runs fn(i) for i in [0, n). With thread_budget() > 1 work is split into
/// contiguous chunks; each index must write only to its own slot so results
/// are schedule-independent.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace bdc
