#include "bdc/threads.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace bdc {

int thread_budget() {
  static int budget = [] {
    const char* env = std::getenv("BDC_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    if (v < 1) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    return std::min(v, hw ? static_cast<int>(hw) : v);
  }();
  return budget;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const int threads = thread_budget();
  if (threads <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int used = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(used));
  const std::int64_t chunk = (n + used - 1) / used;
  for (int t = 0; t < used; ++t) {
    const std::int64_t lo = t * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace bdc
