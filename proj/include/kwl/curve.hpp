#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kwl/reduce.hpp"

namespace kwl {

inline constexpr double kNotRecorded = std::numeric_limits<double>::quiet_NaN();

/// Diagnostics for one recorded step. Unrecorded scalars stay NaN.
struct MixingRow {
  std::uint64_t step = 0;
  double tv_marginal = kNotRecorded;
  double tv_se = kNotRecorded;
  double w2 = kNotRecorded;
  double h_eps_mass = kNotRecorded;
  double eta_hat = kNotRecorded;
  std::map<std::string, Estimate> obs;
};

/// Per-step ensemble diagnostics, one row per recorded step.
struct MixingCurve {
  std::size_t n = 0;
  std::vector<MixingRow> rows;
  /// Stationary (uniform-measure) value of each recorded observable.
  std::map<std::string, double> stationary;
};

}  // namespace kwl
