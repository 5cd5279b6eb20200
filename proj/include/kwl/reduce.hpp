#pragma once

#include <cstddef>
#include <span>

namespace kwl {

/// Pairwise (cascade) summation in a fixed tree order over indices. The tree
/// depends only on the length, so results never depend on scheduling.
double pairwise_sum(std::span<const double> values) noexcept;

struct Estimate {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
};

/// Sample mean and standard error (two-pass, both passes pairwise).
/// Scratch must be at least values.size() long; it is overwritten.
Estimate mean_and_se(std::span<const double> values, std::span<double> scratch);
Estimate mean_and_se(std::span<const double> values);

}  // namespace kwl
