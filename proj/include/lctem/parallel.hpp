#pragma once

#include <cstdint>

namespace lctem {

/// Thread budget for every parallel loop in the library. Loops are split
/// statically and each iteration writes disjoint outputs, so results do not
/// depend on this value.
void set_num_threads(int n);
int num_threads();

template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (end - begin > 1)
  for (std::int64_t i = begin; i < end; ++i) fn(i);
}

}  // namespace lctem
