#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace mepois {

/// Row count from which per-observation reductions switch to blocked pairwise summation.
inline constexpr Eigen::Index kPairwiseThreshold = 10000;
inline constexpr Eigen::Index kSumBlock = 2048;

namespace detail {

template <typename T>
T pairwise_combine(std::vector<T>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return std::move(parts[lo]);
  const std::size_t mid = lo + (hi - lo) / 2;
  T left = pairwise_combine(parts, lo, mid);
  T right = pairwise_combine(parts, mid, hi);
  left += right;
  return left;
}

}  // namespace detail

/// Reduces `block(start, len)` over [0, n). Below the threshold this is a single call;
/// above it the rows are cut into fixed blocks whose partial results are added pairwise,
/// so rounding error grows like O(log n) rather than O(n).
template <typename Block>
auto blocked_sum(Eigen::Index n, Block&& block) -> decltype(block(Eigen::Index{0}, n)) {
  using T = decltype(block(Eigen::Index{0}, n));
  if (n < kPairwiseThreshold) return block(0, n);
  std::vector<T> parts;
  parts.reserve(static_cast<std::size_t>(n / kSumBlock + 1));
  for (Eigen::Index start = 0; start < n; start += kSumBlock) {
    parts.push_back(block(start, std::min(kSumBlock, n - start)));
  }
  return detail::pairwise_combine(parts, 0, parts.size());
}

/// Compensated (Kahan-Neumaier) sum of a vector expression.
template <typename Derived>
double kahan_sum(const Eigen::DenseBase<Derived>& values) {
  double sum = 0.0;
  double comp = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double x = values.derived().coeff(i);
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace mepois
