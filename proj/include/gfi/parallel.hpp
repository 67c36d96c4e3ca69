#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gfi {

/// Runs fn(0) .. fn(count - 1) on at most `limit` threads (0 = hardware
/// concurrency). Tasks beyond the limit queue. Callers write results into
/// per-index slots, so the outcome never depends on completion order. If any
/// task throws, the exception of the lowest failing index is rethrown after
/// all tasks finish.
template <class Fn>
void parallel_for(std::size_t count, std::size_t limit, Fn&& fn)
{
  if (count == 0)
    return;
  if (limit == 0)
    limit = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t threads = std::min(limit, count);
  std::vector<std::exception_ptr> errors(count);
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto drain = [&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 0; t + 1 < threads; ++t)
      pool.emplace_back(drain);
    drain();
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace gfi
