#include "nclkit/parallel.hpp"

#include <atomic>

namespace nclkit {
namespace {
std::atomic<unsigned> g_threads{1};
}

void set_num_threads(unsigned n) {
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  g_threads.store(n);
}

unsigned num_threads() { return g_threads.load(); }

}  // namespace nclkit
