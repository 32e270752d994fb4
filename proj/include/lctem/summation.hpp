#pragma once

#include <cstddef>
#include <span>

namespace lctem {

/// Fixed-order pairwise summation. The split points depend only on the length,
/// so the result is independent of how callers partition work across threads.
template <typename Scalar>
Scalar pairwise_sum(std::span<const Scalar> values) {
  constexpr std::size_t kLeaf = 32;
  if (values.size() <= kLeaf) {
    Scalar acc(0);
    for (Scalar v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

template <typename Scalar>
Scalar pairwise_mean(std::span<const Scalar> values) {
  if (values.empty()) return Scalar(0);
  return pairwise_sum(values) / static_cast<Scalar>(values.size());
}

}  // namespace lctem
