#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hetero {

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
//
// Work items are claimed dynamically but every result must be written by
// index, so the output never depends on the job count. The first exception
// (lowest index) is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = count;

  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace hetero
