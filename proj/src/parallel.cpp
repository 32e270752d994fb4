#include "lctem/parallel.hpp"

#include <algorithm>
#include <atomic>

namespace lctem {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

}  // namespace lctem
