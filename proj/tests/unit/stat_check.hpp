#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <gtest/gtest.h>

namespace kwl_test {

// |observed - expected| <= z * se
inline ::testing::AssertionResult WithinSe(double observed, double expected, double se, double z = 4.0) {
  if (std::abs(observed - expected) <= z * se) return ::testing::AssertionSuccess();
  return ::testing::AssertionFailure() << "observed " << observed << " expected " << expected
                                       << " se " << se << " (" << (observed - expected) / se
                                       << " sigma)";
}

struct Moments {
  double mean, se;
};

inline Moments moments(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  s /= static_cast<double>(v.size() - 1);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

// fraction estimate with binomial standard error
inline Moments proportion(std::size_t hits, std::size_t total) {
  const double p = static_cast<double>(hits) / static_cast<double>(total);
  return {p, std::sqrt(std::max(p * (1.0 - p), 1.0 / static_cast<double>(total)) /
                       static_cast<double>(total))};
}

}  // namespace kwl_test
