#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace swlab {

// Worker count for experiment sweeps; SWLAB_THREADS caps it.
inline unsigned pool_threads() {
  if (const char* env = std::getenv("SWLAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

// Runs fn(i) for i in [0, count). Work is pulled from a shared counter; the
// caller owns result placement, so output order stays deterministic.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t threads =
      std::min<std::size_t>(pool_threads(), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count;
           i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace swlab
