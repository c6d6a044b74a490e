#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "mdfa/types.hpp"

namespace mdfa::par {

/// Run body(0..count-1) on up to `workers` threads. Work items must write to
/// disjoint, preallocated slots and derive any randomness from their own
/// index, so results do not depend on the worker count or schedule. The first
/// exception thrown by a work item is rethrown after all threads join.
inline void parallel_for(Index count, Index workers,
                         const std::function<void(Index)>& body) {
  if (count <= 0) return;
  if (workers < 1) workers = 1;
  workers = std::min(workers, count);
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&]() {
    while (true) {
      const Index i = next.fetch_add(1);
      if (i >= count) break;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) break;
      }
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        break;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) threads.emplace_back(run);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mdfa::par
