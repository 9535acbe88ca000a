#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace ctfmnmf {

// Runs fn(index) for index in [begin, end) on up to num_threads workers.
// Indices are split into contiguous chunks, so per-index work must not share
// mutable state across indices. Exceptions are captured and rethrown on the
// calling thread (first one wins).
inline void parallel_for(int begin, int end, int num_threads,
                         const std::function<void(int)>& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  num_threads = std::max(1, std::min(num_threads, count));
  if (num_threads == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }

  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(num_threads));
  const int chunk = (count + num_threads - 1) / num_threads;
  for (int t = 0; t < num_threads; ++t) {
    const int lo = begin + t * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&, lo, hi, t]() {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ctfmnmf
