#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kwl/curve.hpp"
#include "kwl/execution.hpp"
#include "kwl/random_stream.hpp"
#include "kwl/sphere.hpp"

namespace kwl {

/// Rotations between re-projections onto the sphere.
inline constexpr std::uint64_t kRenormalizeEvery = 1024;

/// Set of unordered coordinate pairs used so far, as a bit mask over the
/// canonical pair index.
class PairCoverage {
 public:
  PairCoverage() = default;
  explicit PairCoverage(std::size_t n);

  std::size_t total() const noexcept { return total_; }
  std::size_t count() const noexcept { return count_; }
  bool complete() const noexcept { return count_ == total_; }
  bool contains(std::size_t pair_index) const;
  void insert(std::size_t pair_index);

 private:
  std::vector<std::uint64_t> words_;
  std::size_t total_ = 0;
  std::size_t count_ = 0;
};

/// One walker: position, step counter k, coverage for the event A_k, stream.
struct WalkState {
  std::vector<double> point;
  std::uint64_t step = 0;
  PairCoverage coverage;
  RandomStream rng;

  static WalkState from_point(const SpherePoint& start, RandomStream rng);
  static WalkState uniform_start(std::size_t n, RandomStream rng);

  std::size_t dim() const noexcept { return point.size(); }
};

/// Draws one rotation event, applies it and records its pair.
WalkState step(WalkState state);
void advance(WalkState& state, const PairTable& pairs);

enum class StartKind { PointMassE1, Uniform };

struct EnsembleConfig {
  std::size_t n = 3;
  std::size_t walkers = 1;
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  StartKind start = StartKind::PointMassE1;
  std::uint64_t record_every = 1;
  /// Upper bound on walker state held in memory.
  std::size_t memory_budget_bytes = std::size_t{8} << 30;

  void validate() const;
};

/// Walker positions at a recorded step, row-major walkers x n.
struct EnsembleSnapshot {
  std::uint64_t step = 0;
  std::size_t n = 0;
  std::vector<double> points;
  std::vector<std::uint8_t> covered;  // A_k holds for the walker

  std::size_t walkers() const noexcept { return covered.size(); }
  std::span<const double> row(std::size_t w) const { return {points.data() + w * n, n}; }
  std::size_t covered_count() const noexcept;
};

/// Walker ensemble in structure-of-arrays layout. Walker w owns the stream
/// (seed, w); every walker consumes its own stream only, so the state after
/// any number of steps is independent of how walkers are scheduled.
class Ensemble {
 public:
  explicit Ensemble(const EnsembleConfig& cfg);

  std::size_t dim() const noexcept { return n_; }
  std::size_t walkers() const noexcept { return walkers_; }
  std::uint64_t step() const noexcept { return step_; }

  /// OpenMP over walkers.
  void advance(std::uint64_t steps);
  /// Single-threaded reference; must agree bit for bit with advance().
  void advance_serial(std::uint64_t steps);

  /// Refreshes coverage flags and returns the current state.
  const EnsembleSnapshot& snapshot();

 private:
  void advance_walker(std::size_t w, std::uint64_t steps) noexcept;

  std::size_t n_;
  std::size_t walkers_;
  std::uint64_t step_ = 0;
  PairTable pairs_;
  std::size_t words_per_walker_;
  std::vector<RandomStream> streams_;
  std::vector<std::uint64_t> coverage_;
  std::vector<std::uint32_t> covered_pairs_;
  EnsembleSnapshot snap_;
};

/// Receives each recorded snapshot and fills its fields of the row.
using Observer = std::function<void(const EnsembleSnapshot&, MixingRow&, MixingCurve&)>;

class ObserverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Records step 0, every `record_every` steps, and the final step.
MixingCurve run_ensemble(const EnsembleConfig& cfg, std::span<const Observer> observers,
                         Execution exec = Execution::Parallel);

struct EtaPoint {
  std::uint64_t k;
  double eta_hat;
  double se;
};

/// Fraction of walkers (started at e1) whose coverage is incomplete after k steps,
/// for k = 0..k_max.
std::vector<EtaPoint> empirical_eta(std::size_t n, std::uint64_t k_max, std::size_t walkers,
                                    std::uint64_t seed);

/// Sub-ensemble of walkers for which A_k holds.
EnsembleSnapshot conditional_snapshot(const EnsembleSnapshot& snapshot);

}  // namespace kwl
