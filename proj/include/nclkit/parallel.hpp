#ifndef NCLKIT_PARALLEL_HPP_
#define NCLKIT_PARALLEL_HPP_

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace nclkit {

// Worker count used by row-parallel kernels. 1 (the default) runs inline.
// 0 selects std::thread::hardware_concurrency().
void set_num_threads(unsigned n);
unsigned num_threads();

// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is
// handled by exactly one call, so per-row results do not depend on the
// thread count.
template <typename Fn>
void parallel_for_rows(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(num_threads(), n);
  if (workers <= 1 || n < 64) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

}  // namespace nclkit

#endif  // NCLKIT_PARALLEL_HPP_
