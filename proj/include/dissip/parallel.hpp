#pragma once

#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dissip {

// Static block partition of [0, n) over `workers` threads. Callers keep
// determinism by writing results per index and reducing in index order.
// fn receives (index, worker).
inline void parallel_for(int n, int workers,
                         const std::function<void(int, int)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::exception_ptr err;
  std::mutex err_mu;
  for (int t = 0; t < workers; ++t) {
    threads.emplace_back([&, t]() {
      int lo = static_cast<int>(static_cast<long long>(n) * t / workers);
      int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / workers);
      try {
        for (int i = lo; i < hi; ++i) fn(i, t);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (err) std::rethrow_exception(err);
}

inline int default_workers() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace dissip
