// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace omnisplat {

// Worker count: OMNISPLAT_THREADS caps (or sets) the hardware default.
inline int max_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("OMNISPLAT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(v);
  }
  return static_cast<int>(hw);
}

inline int resolve_threads(int requested) { return requested > 0 ? requested : max_threads(); }

// Static contiguous partition of [0, n) over `threads` workers. Each index is
// processed exactly once and must write only to its own output slots, which
// makes results bit-identical for every thread count.
template <typename F>
void parallel_for(int64_t n, F&& f, int threads = 0) {
  if (n <= 0) return;
  const int t = std::min<int64_t>(resolve_threads(threads), n);
  if (t <= 1) {
    for (int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(t);
  for (int w = 0; w < t; ++w) {
    const int64_t lo = n * w / t;
    const int64_t hi = n * (w + 1) / t;
    workers.emplace_back([&f, lo, hi] {
      for (int64_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace omnisplat
