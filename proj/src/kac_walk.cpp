#include "kwl/kac_walk.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "kwl/errors.hpp"

namespace kwl {

namespace {

constexpr std::size_t words_for(std::size_t pairs) { return (pairs + 63) / 64; }

// Shared by the single-walker and ensemble paths.
inline void kac_step(std::span<double> x, std::uint64_t& step, RandomStream& rng,
                     const PairTable& pairs, std::uint64_t* words,
                     std::uint32_t& covered) noexcept {
  const auto ev = draw_event_raw(pairs.size(), rng);
  const auto [i, j] = pairs[ev.pair];
  rotate_in_place(x, i, j, std::cos(ev.theta), std::sin(ev.theta));
  const std::uint64_t bit = std::uint64_t{1} << (ev.pair & 63);
  std::uint64_t& word = words[ev.pair >> 6];
  if ((word & bit) == 0) {
    word |= bit;
    ++covered;
  }
  if (++step % kRenormalizeEvery == 0) renormalize(x);
}

}  // namespace

PairCoverage::PairCoverage(std::size_t n)
    : words_(words_for(pair_count(n)), 0), total_(pair_count(n)) {}

bool PairCoverage::contains(std::size_t pair_index) const {
  if (pair_index >= total_) throw ValidationError("PairCoverage: pair index out of range");
  return (words_[pair_index >> 6] >> (pair_index & 63)) & 1u;
}

void PairCoverage::insert(std::size_t pair_index) {
  if (pair_index >= total_) throw ValidationError("PairCoverage: pair index out of range");
  const std::uint64_t bit = std::uint64_t{1} << (pair_index & 63);
  if ((words_[pair_index >> 6] & bit) == 0) {
    words_[pair_index >> 6] |= bit;
    ++count_;
  }
}

WalkState WalkState::from_point(const SpherePoint& start, RandomStream rng) {
  WalkState s;
  s.point.assign(start.coords().begin(), start.coords().end());
  s.coverage = PairCoverage(start.dim());
  s.rng = rng;
  return s;
}

WalkState WalkState::uniform_start(std::size_t n, RandomStream rng) {
  const SpherePoint p = sample_uniform_sphere(n, rng);
  return from_point(p, rng);
}

void advance(WalkState& state, const PairTable& pairs) {
  if (pairs.dim() != state.dim()) throw ValidationError("advance: pair table dimension mismatch");
  const auto ev = draw_event_raw(pairs.size(), state.rng);
  const auto [i, j] = pairs[ev.pair];
  rotate_in_place(state.point, i, j, std::cos(ev.theta), std::sin(ev.theta));
  state.coverage.insert(ev.pair);
  if (++state.step % kRenormalizeEvery == 0) renormalize(state.point);
}

WalkState step(WalkState state) {
  const PairTable pairs(state.dim());
  advance(state, pairs);
  return state;
}

void EnsembleConfig::validate() const {
  if (n < 2) throw ValidationError("ensemble: n must be >= 2");
  if (walkers < 1) throw ValidationError("ensemble: walkers must be >= 1");
  if (record_every < 1) throw ValidationError("ensemble: record_every must be >= 1");
  if (steps > 0 && record_every > steps)
    throw ValidationError("ensemble: record_every must not exceed steps");
  const std::size_t per_walker =
      n * sizeof(double) + words_for(pair_count(n)) * 8 + sizeof(RandomStream) + 8;
  if (walkers > memory_budget_bytes / per_walker)
    throw ResourceError("ensemble: " + std::to_string(walkers) + " walkers x n=" +
                        std::to_string(n) + " exceeds the memory budget of " +
                        std::to_string(memory_budget_bytes) + " bytes");
}

std::size_t EnsembleSnapshot::covered_count() const noexcept {
  std::size_t c = 0;
  for (auto f : covered) c += f;
  return c;
}

Ensemble::Ensemble(const EnsembleConfig& cfg)
    : n_(cfg.n),
      walkers_(cfg.walkers),
      pairs_((cfg.validate(), cfg.n)),
      words_per_walker_(words_for(pair_count(cfg.n))),
      streams_(cfg.walkers),
      coverage_(cfg.walkers * words_for(pair_count(cfg.n)), 0),
      covered_pairs_(cfg.walkers, 0) {
  snap_.n = n_;
  snap_.points.assign(walkers_ * n_, 0.0);
  snap_.covered.assign(walkers_, 0);
  for (std::size_t w = 0; w < walkers_; ++w) {
    streams_[w] = RandomStream(cfg.seed, w);
    std::span<double> x(snap_.points.data() + w * n_, n_);
    if (cfg.start == StartKind::Uniform)
      sample_uniform_sphere_into(x, streams_[w]);
    else
      x[0] = 1.0;
  }
}

void Ensemble::advance_walker(std::size_t w, std::uint64_t steps) noexcept {
  std::span<double> x(snap_.points.data() + w * n_, n_);
  std::uint64_t* words = coverage_.data() + w * words_per_walker_;
  std::uint64_t k = step_;
  RandomStream rng = streams_[w];
  std::uint32_t covered = covered_pairs_[w];
  for (std::uint64_t s = 0; s < steps; ++s) kac_step(x, k, rng, pairs_, words, covered);
  streams_[w] = rng;
  covered_pairs_[w] = covered;
}

void Ensemble::advance(std::uint64_t steps) {
  const auto count = static_cast<std::int64_t>(walkers_);
#pragma omp parallel for schedule(static)
  for (std::int64_t w = 0; w < count; ++w) advance_walker(static_cast<std::size_t>(w), steps);
  step_ += steps;
}

void Ensemble::advance_serial(std::uint64_t steps) {
  for (std::size_t w = 0; w < walkers_; ++w) advance_walker(w, steps);
  step_ += steps;
}

const EnsembleSnapshot& Ensemble::snapshot() {
  const auto total = static_cast<std::uint32_t>(pairs_.size());
  for (std::size_t w = 0; w < walkers_; ++w) snap_.covered[w] = covered_pairs_[w] == total;
  snap_.step = step_;
  return snap_;
}

MixingCurve run_ensemble(const EnsembleConfig& cfg, std::span<const Observer> observers,
                         Execution exec) {
  Ensemble ens(cfg);
  MixingCurve curve;
  curve.n = cfg.n;

  auto record = [&] {
    const EnsembleSnapshot& snap = ens.snapshot();
    MixingRow row;
    row.step = snap.step;
    for (std::size_t o = 0; o < observers.size(); ++o) {
      try {
        observers[o](snap, row, curve);
      } catch (const std::exception& e) {
        throw ObserverError("observer " + std::to_string(o) + " failed at step " +
                            std::to_string(snap.step) + ": " + e.what());
      }
    }
    curve.rows.push_back(std::move(row));
  };

  record();
  while (ens.step() < cfg.steps) {
    const std::uint64_t chunk = std::min(cfg.record_every, cfg.steps - ens.step());
    if (exec == Execution::Parallel)
      ens.advance(chunk);
    else
      ens.advance_serial(chunk);
    record();
  }
  return curve;
}

std::vector<EtaPoint> empirical_eta(std::size_t n, std::uint64_t k_max, std::size_t walkers,
                                    std::uint64_t seed) {
  EnsembleConfig cfg;
  cfg.n = n;
  cfg.walkers = walkers;
  cfg.steps = k_max;
  cfg.seed = seed;
  cfg.start = StartKind::PointMassE1;
  cfg.record_every = 1;

  std::vector<EtaPoint> out;
  out.reserve(k_max + 1);
  const Observer eta = [&out](const EnsembleSnapshot& snap, MixingRow& row, MixingCurve&) {
    const double m = static_cast<double>(snap.walkers());
    const double p = 1.0 - static_cast<double>(snap.covered_count()) / m;
    row.eta_hat = p;
    out.push_back({snap.step, p, std::sqrt(p * (1.0 - p) / m)});
  };
  run_ensemble(cfg, std::span(&eta, 1));
  return out;
}

EnsembleSnapshot conditional_snapshot(const EnsembleSnapshot& snapshot) {
  EnsembleSnapshot out;
  out.step = snapshot.step;
  out.n = snapshot.n;
  const std::size_t kept = snapshot.covered_count();
  if (kept == 0)
    throw ValidationError("conditional_snapshot: no walker has used every coordinate pair by step " +
                          std::to_string(snapshot.step) +
                          "; increase the step count or the number of walkers");
  out.points.reserve(kept * snapshot.n);
  out.covered.assign(kept, 1);
  for (std::size_t w = 0; w < snapshot.walkers(); ++w) {
    if (!snapshot.covered[w]) continue;
    const auto r = snapshot.row(w);
    out.points.insert(out.points.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace kwl
