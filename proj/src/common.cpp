#include "mile/common.hpp"

#include <omp.h>

#include <atomic>

namespace mile {

namespace {
std::atomic<int> g_max_workers{0};
}

void set_max_workers(int n) { g_max_workers.store(n < 0 ? 0 : n); }

int max_workers() {
  const int n = g_max_workers.load();
  if (n > 0) return n;
  return omp_get_max_threads();
}

}  // namespace mile
