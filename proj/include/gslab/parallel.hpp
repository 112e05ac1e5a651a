#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

#include "gslab/errors.hpp"

namespace gslab {

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(0..n-1) across `workers` threads. Tasks are claimed from a shared
// counter, so which thread runs which index is nondeterministic; callers must
// key any randomness on the index, never on the thread. The first exception
// is rethrown on the calling thread after all workers finish.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (n < 0) throw ContractError("parallel_for: negative task count");
  if (workers < 1) throw ContractError("parallel_for: need at least one worker");
  if (n == 0) return;

  if (workers == 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<int> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  pool.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gslab
