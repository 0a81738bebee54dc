#include "raisor/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace raisor {

ThreadPool::ThreadPool(std::size_t threads) : threads_(threads) {
  if (threads_ == 0) threads_ = std::max(1u, std::thread::hardware_concurrency());
}

void ThreadPool::parallel_for(
    std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& body) const {
  if (n == 0) return;
  const std::size_t workers = std::min(threads_, n);
  if (workers == 1) {
    body(0, n, 0);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = n / workers;
  const std::size_t extra = n % workers;
  auto bounds = [&](std::size_t w) {
    const std::size_t begin = w * chunk + std::min(w, extra);
    return std::pair{begin, begin + chunk + (w < extra ? 1 : 0)};
  };
  auto run = [&](std::size_t w) {
    try {
      auto [begin, end] = bounds(w);
      body(begin, end, w);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

double pairwise_sum(std::span<const double> values) noexcept {
  constexpr std::size_t kLeaf = 64;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace raisor
