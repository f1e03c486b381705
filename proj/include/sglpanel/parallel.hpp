#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sglpanel {

/// Runs fn(k) for k in [0, n_tasks) on up to `threads` workers. Tasks are
/// handed out through an atomic counter; callers write results into slot k so
/// that any later reduction runs in index order regardless of scheduling.
/// The first exception thrown by a task is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t n_tasks, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n_tasks, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < n_tasks; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t k = next++; k < n_tasks; k = next++) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sglpanel
