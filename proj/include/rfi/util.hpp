#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace rfi {

/// Worker count: hardware concurrency, capped by the RFI_THREADS env var.
inline unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RFI_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Parallel loop over [0, n). The body must be schedule-independent
/// (deterministic per index); results may be written to per-index slots.
inline void parallel_for(Eigen::Index n, const std::function<void(Eigen::Index)>& body) {
  const unsigned workers = std::min<unsigned>(thread_count(), static_cast<unsigned>(n));
  if (workers <= 1) {
    for (Eigen::Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Eigen::Index> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (Eigen::Index i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace rfi
