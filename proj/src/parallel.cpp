#include "dspc/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace dspc {

int max_threads() {
  static const int cached = [] {
    const char* env = std::getenv("DEEPSPEC_THREADS");
    if (env == nullptr) return 1;
    int v = std::atoi(env);
    // Oversubscription is allowed (results are thread-count invariant by
    // construction), so the cap need not track core count.
    return std::clamp(v, 1, 256);
  }();
  return cached;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = max_threads();
  if (workers > n) workers = static_cast<int>(n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int64_t b = w * chunk;
    int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace dspc
