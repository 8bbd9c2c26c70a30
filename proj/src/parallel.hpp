#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace smsn::detail {

/// Runs body(task) for every task index on up to `threads` workers and
/// rethrows the first failure after all workers have joined.
template <class Body>
void parallel_for(int n_tasks, int threads, const Body& body) {
  threads = std::clamp(threads, 1, std::max(1, n_tasks));
  if (threads == 1) {
    for (int t = 0; t < n_tasks; ++t) body(t);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  auto worker = [&] {
    for (int t = next++; t < n_tasks && !failed; t = next++) {
      try {
        body(t);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace smsn::detail
