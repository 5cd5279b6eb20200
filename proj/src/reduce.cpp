#include "kwl/reduce.hpp"

#include <cmath>
#include <vector>

namespace kwl {

namespace {
constexpr std::size_t kLeaf = 8;
}

double pairwise_sum(std::span<const double> values) noexcept {
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Estimate mean_and_se(std::span<const double> values, std::span<double> scratch) {
  const std::size_t m = values.size();
  if (m == 0) return {std::nan(""), std::nan("")};
  const double mean = pairwise_sum(values) / static_cast<double>(m);
  if (m == 1) return {mean, 0.0};
  for (std::size_t i = 0; i < m; ++i) {
    const double d = values[i] - mean;
    scratch[i] = d * d;
  }
  const double var = pairwise_sum(scratch.first(m)) / static_cast<double>(m - 1);
  return {mean, std::sqrt(var / static_cast<double>(m))};
}

Estimate mean_and_se(std::span<const double> values) {
  std::vector<double> scratch(values.size());
  return mean_and_se(values, scratch);
}

}  // namespace kwl
