#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace raisor {

/// Fixed-size worker set for embarrassingly parallel loops over particles.
///
/// Work is split into contiguous static chunks, one per worker, so which
/// worker handles an index depends only on (n, thread count). Callers write
/// per-index results into preallocated storage and reduce afterwards in a
/// fixed order; nothing here performs a reduction.
class ThreadPool {
 public:
  /// threads == 0 selects std::thread::hardware_concurrency().
  explicit ThreadPool(std::size_t threads = 1);

  std::size_t size() const noexcept { return threads_; }

  /// Calls body(begin, end, worker) over a partition of [0, n).
  /// Exceptions thrown by any chunk are rethrown on the calling thread.
  void parallel_for(std::size_t n,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& body) const;

 private:
  std::size_t threads_;
};

/// Pairwise (tree) summation; result depends only on the input order.
double pairwise_sum(std::span<const double> values) noexcept;

}  // namespace raisor
