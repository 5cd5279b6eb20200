#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kwl/curve.hpp"
#include "kwl/kac_walk.hpp"

namespace kwl::metrics {

/// Non-owning row-major point cloud on S^{n-1}.
struct PointSet {
  std::span<const double> coords;
  std::size_t n = 0;

  std::size_t size() const noexcept { return n == 0 ? 0 : coords.size() / n; }
  std::span<const double> row(std::size_t i) const { return coords.subspan(i * n, n); }

  static PointSet of(const EnsembleSnapshot& s) { return {s.points, s.n}; }
};

struct TvEstimate {
  double tv;
  double se;  // delta-method standard error
};

/// (1/2) sum_b |p_b - q_b| over an equal-width histogram of x_1 on [-1, 1], where
/// q_b is the exact uniform-sphere mass of bin b. A lower bound on the full TV
/// distance in expectation.
TvEstimate tv_marginal_estimate(const PointSet& samples, std::size_t bins);

/// Fraction of samples with min_i |x_i| < epsilon.
double h_eps_mass(const PointSet& samples, double epsilon);

enum class TransportMode { Exact, Sliced };
enum class GroundMetric { Chordal, Geodesic };

struct TransportOptions {
  std::size_t projections = 256;
  std::uint64_t seed = 0x736c69636564ULL;
  GroundMetric metric = GroundMetric::Chordal;
};

inline constexpr std::size_t kExactTransportLimit = 2048;

struct TransportPlanResult {
  double cost = 0.0;                 // mean matched squared distance
  std::vector<std::size_t> matching;  // a[i] is matched to b[matching[i]]
  double w2() const;
};

/// Exact mode solves the assignment problem (shortest augmenting paths, O(m^3)).
/// Sliced mode sorts both clouds along random directions and keeps the best
/// full-dimensional matching found; it never undercuts the exact cost.
TransportPlanResult wasserstein_estimate(const PointSet& a, const PointSet& b, TransportMode mode,
                                         const TransportOptions& opts = {});

/// Mean squared ground distance of a given matching.
double matching_cost(const PointSet& a, const PointSet& b, std::span<const std::size_t> matching,
                     GroundMetric metric = GroundMetric::Chordal);

struct DecayFitOptions {
  /// Steps excluded at the start of the window; negative selects 2n. Zero suits
  /// exact eigenfunctions such as x_1^2 - 1/n, which have no transient.
  std::int64_t burn_in = 0;
  double min_snr = 5.0;
  std::size_t min_points = 3;
  /// Inverse-variance weights from the delta method; false gives ordinary LS.
  bool weighted = true;
};

struct DecayFit {
  double rate;  // slope of ln|mean - stationary| per step, estimates ln(eigenvalue)
  double r2;
  std::uint64_t first_step;
  std::uint64_t last_step;
  std::size_t points;
};

/// Least-squares fit of ln|mean_k - stationary| against k over the contiguous
/// window after burn-in in which the signal exceeds min_snr standard errors.
/// r2 is the (weighted) coefficient of determination.
DecayFit observable_decay(const MixingCurve& curve, const std::string& name,
                          const DecayFitOptions& opts = {});

// Observers for run_ensemble.

Observer tv_observer(std::size_t bins);
Observer h_eps_observer(double epsilon);
Observer eta_observer();

/// Records x_i, x_i^2 and x_i^4 as "x{i}", "x{i}sq", "x{i}quad" (1-based i) for
/// the first `coordinates` axes, with their stationary values.
Observer moment_observer(std::size_t coordinates = 1);

/// W2 between the first `size` walkers and a fixed uniform reference cloud of
/// the same size. The reference uses streams disjoint from the walkers'.
Observer w2_observer(TransportMode mode, std::size_t size, std::uint64_t seed,
                     const TransportOptions& opts = {});

/// Row-major uniform cloud drawn from streams (seed, first_stream + i).
std::vector<double> uniform_cloud(std::size_t n, std::size_t count, std::uint64_t seed,
                                  std::uint64_t first_stream = 0);

}  // namespace kwl::metrics
