#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace resolvent_lab {

/// Worker count from RESOLVENT_LAB_WORKERS, else the hardware concurrency.
inline int default_workers() {
  if (const char* env = std::getenv("RESOLVENT_LAB_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) {
        return n;
      }
    } catch (const std::exception&) {
    }
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

/// Run fn(i) for i in [0, n) on `workers` threads.
///
/// Work is handed out in fixed blocks through an atomic counter; callers write
/// results into slot i so the outcome never depends on scheduling. The first
/// exception thrown by any task is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn, std::size_t block = 16) {
  if (n == 0) {
    return;
  }
  workers = std::max(1, workers);
  const std::size_t blocks = (n + block - 1) / block;
  if (workers == 1 || blocks == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks) {
        return;
      }
      try {
        const std::size_t end = std::min(n, (b + 1) * block);
        for (std::size_t i = b * block; i < end; ++i) {
          fn(i);
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
        failed = true;
      }
    }
  };
  const int count = static_cast<int>(std::min<std::size_t>(workers, blocks));
  std::vector<std::thread> pool;
  pool.reserve(count - 1);
  for (int t = 1; t < count; ++t) {
    pool.emplace_back(run);
  }
  run();
  for (auto& th : pool) {
    th.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

}  // namespace resolvent_lab
