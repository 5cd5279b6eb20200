#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "kwl/errors.hpp"
#include "kwl/exact_bounds.hpp"
#include "kwl/execution.hpp"
#include "kwl/kac_walk.hpp"
#include "kwl/mixing_metrics.hpp"
#include "stat_check.hpp"

using kwl_test::WithinSe;

namespace {

// P(some of m pairs unused after k uniform draws), by inclusion-exclusion.
double coupon_tail_exact(int m, int k) {
  double p = 0.0, binom = 1.0;
  for (int j = 1; j <= m; ++j) {
    binom = binom * (m - j + 1) / j;
    p += ((j % 2) ? 1.0 : -1.0) * binom * std::pow(1.0 - static_cast<double>(j) / m, k);
  }
  return p;
}

// Step index at which all m pairs have been drawn, simulated with a generator
// unrelated to the walk's.
std::vector<int> coupon_completion_steps(int m, std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> pick(0, m - 1);
  std::vector<int> out(trials);
  for (auto& t : out) {
    std::vector<bool> seen(m, false);
    int left = m, k = 0;
    while (left > 0) {
      ++k;
      const int p = pick(gen);
      if (!seen[p]) {
        seen[p] = true;
        --left;
      }
    }
    t = k;
  }
  return out;
}

kwl::Observer capture_points(std::vector<std::vector<double>>& sink) {
  return [&sink](const kwl::EnsembleSnapshot& s, kwl::MixingRow&, kwl::MixingCurve&) {
    sink.push_back(s.points);
  };
}

TEST(Step, N2FromE1LandsOnDrawnAngle) {
  const kwl::RandomStream rng(101, 0);
  kwl::RandomStream peek = rng;
  const auto ev = kwl::draw_rotation_event(2, peek);
  const auto s = kwl::step(kwl::WalkState::from_point(kwl::SpherePoint::basis(2, 0), rng));
  EXPECT_NEAR(s.point[0], std::cos(ev.theta), 1e-15);
  EXPECT_NEAR(s.point[1], std::sin(ev.theta), 1e-15);
  EXPECT_TRUE(s.coverage.complete());
  EXPECT_EQ(s.step, 1u);
  EXPECT_EQ(s.rng, peek);
}

TEST(Step, N3RotationAwayFromFirstAxisFixesE1) {
  std::uint64_t stream = 0;
  for (;; ++stream) {
    kwl::RandomStream peek(102, stream);
    std::uint64_t idx = 0;
    kwl::draw_rotation_event(3, peek, &idx);
    if (idx == 2) break;
  }
  const auto s = kwl::step(kwl::WalkState::from_point(kwl::SpherePoint::basis(3, 0),
                                                      kwl::RandomStream(102, stream)));
  EXPECT_EQ(s.point, (std::vector<double>{1.0, 0.0, 0.0}));
  EXPECT_EQ(s.coverage.count(), 1u);
  EXPECT_TRUE(s.coverage.contains(2));
}

TEST(Step, CoverageGrowsMonotonically) {
  auto s = kwl::WalkState::from_point(kwl::SpherePoint::basis(6, 0), kwl::RandomStream(103, 0));
  std::size_t last = 0;
  for (int k = 1; k <= 500; ++k) {
    s = kwl::step(std::move(s));
    ASSERT_GE(s.coverage.count(), last);
    ASSERT_LE(s.coverage.count(), 15u);
    ASSERT_EQ(s.step, static_cast<std::uint64_t>(k));
    last = s.coverage.count();
  }
  EXPECT_TRUE(s.coverage.complete());
}

TEST(Step, RenormalizesOnSchedule) {
  auto s = kwl::WalkState::uniform_start(5, kwl::RandomStream(104, 0));
  const kwl::PairTable pairs(5);
  for (std::uint64_t k = 0; k < 3 * kwl::kRenormalizeEvery; ++k) kwl::advance(s, pairs);
  EXPECT_NEAR(kwl::squared_norm(s.point), 1.0, 1e-15);
}

TEST(Step, ManyWalkersReachStationarySecondMoment) {
  kwl::EnsembleConfig cfg;
  cfg.n = 4;
  cfg.walkers = 100000;
  cfg.steps = 200;
  cfg.seed = 105;
  cfg.record_every = 200;
  kwl::Ensemble ens(cfg);
  ens.advance(200);
  const auto& snap = ens.snapshot();
  std::vector<double> sq(cfg.walkers);
  for (std::size_t w = 0; w < cfg.walkers; ++w) sq[w] = snap.row(w)[0] * snap.row(w)[0];
  const auto m = kwl_test::moments(sq);
  EXPECT_TRUE(WithinSe(m.mean, 0.25, m.se));
}

TEST(Ensemble, SnapshotRowsStayUnitNorm) {
  kwl::EnsembleConfig cfg;
  cfg.n = 7;
  cfg.walkers = 1000;
  cfg.steps = 3000;
  cfg.seed = 106;
  cfg.start = kwl::StartKind::Uniform;
  cfg.record_every = 1000;
  const kwl::Observer check = [](const kwl::EnsembleSnapshot& s, kwl::MixingRow&, kwl::MixingCurve&) {
    for (std::size_t w = 0; w < s.walkers(); ++w) {
      const double r = std::sqrt(kwl::squared_norm(s.row(w)));
      if (std::abs(r - 1.0) > 1e-9) throw std::runtime_error("row off the sphere");
    }
  };
  EXPECT_NO_THROW(kwl::run_ensemble(cfg, std::span(&check, 1)));
}

TEST(RunEnsemble, NoStepsReturnsTheStart) {
  kwl::EnsembleConfig cfg;
  cfg.n = 5;
  cfg.walkers = 1;
  cfg.steps = 0;
  std::vector<std::vector<double>> pts;
  const auto obs = capture_points(pts);
  const auto curve = kwl::run_ensemble(cfg, std::span(&obs, 1));
  ASSERT_EQ(curve.rows.size(), 1u);
  EXPECT_EQ(curve.rows[0].step, 0u);
  EXPECT_EQ(pts.at(0), (std::vector<double>{1, 0, 0, 0, 0}));

  cfg.start = kwl::StartKind::Uniform;
  cfg.seed = 107;
  pts.clear();
  kwl::run_ensemble(cfg, std::span(&obs, 1));
  kwl::RandomStream rng(107, 0);
  const auto expect = kwl::sample_uniform_sphere(5, rng);
  EXPECT_EQ(pts.at(0), std::vector<double>(expect.coords().begin(), expect.coords().end()));
}

TEST(RunEnsemble, RecordsStrideAndFinalStep) {
  kwl::EnsembleConfig cfg;
  cfg.n = 3;
  cfg.walkers = 10;
  cfg.steps = 25;
  cfg.record_every = 10;
  const auto curve = kwl::run_ensemble(cfg, {});
  std::vector<std::uint64_t> steps;
  for (const auto& r : curve.rows) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::uint64_t>{0, 10, 20, 25}));
}

TEST(RunEnsemble, UniformStartIsStationary) {
  kwl::EnsembleConfig cfg;
  cfg.n = 5;
  cfg.walkers = 100000;
  cfg.steps = 40;
  cfg.seed = 108;
  cfg.start = kwl::StartKind::Uniform;
  cfg.record_every = 10;
  const std::vector<kwl::Observer> obs{kwl::metrics::moment_observer(5)};
  const auto curve = kwl::run_ensemble(cfg, obs);
  ASSERT_EQ(curve.rows.size(), 5u);
  for (const auto& row : curve.rows)
    for (int i = 1; i <= 5; ++i) {
      const auto& m1 = row.obs.at("x" + std::to_string(i));
      const auto& m2 = row.obs.at("x" + std::to_string(i) + "sq");
      EXPECT_TRUE(WithinSe(m1.mean, 0.0, m1.se)) << "step " << row.step << " x" << i;
      EXPECT_TRUE(WithinSe(m2.mean, 0.2, m2.se)) << "step " << row.step << " x" << i << "^2";
    }
}

TEST(RunEnsemble, CoveredFractionMatchesCouponCollector) {
  kwl::EnsembleConfig cfg;
  cfg.n = 3;
  cfg.walkers = 100000;
  cfg.steps = 100;
  cfg.seed = 109;
  cfg.record_every = 1;
  std::vector<double> covered;
  const kwl::Observer obs = [&](const kwl::EnsembleSnapshot& s, kwl::MixingRow&, kwl::MixingCurve&) {
    covered.push_back(static_cast<double>(s.covered_count()) / static_cast<double>(s.walkers()));
  };
  kwl::run_ensemble(cfg, std::span(&obs, 1));
  ASSERT_EQ(covered.size(), 101u);

  const auto done = coupon_completion_steps(3, 100000, 2024);
  for (int k = 0; k <= 100; k += 5) {
    std::size_t c = 0;
    for (int d : done) c += d <= k;
    const auto oracle = kwl_test::proportion(c, done.size());
    const auto walk = kwl_test::proportion(static_cast<std::size_t>(std::llround(covered[k] * 1e5)), 100000);
    EXPECT_TRUE(WithinSe(walk.mean, oracle.mean, std::hypot(walk.se, oracle.se))) << "k=" << k;
  }
}

TEST(RunEnsemble, ObserverFailureAborts) {
  kwl::EnsembleConfig cfg;
  cfg.n = 3;
  cfg.walkers = 4;
  cfg.steps = 10;
  cfg.record_every = 5;
  const kwl::Observer bad = [](const kwl::EnsembleSnapshot& s, kwl::MixingRow&, kwl::MixingCurve&) {
    if (s.step == 5) throw std::runtime_error("boom");
  };
  try {
    kwl::run_ensemble(cfg, std::span(&bad, 1));
    FAIL() << "expected ObserverError";
  } catch (const kwl::ObserverError& e) {
    EXPECT_NE(std::string(e.what()).find("step 5"), std::string::npos);
  }
}

TEST(EnsembleConfig, Validation) {
  kwl::EnsembleConfig cfg;
  cfg.n = 1;
  EXPECT_THROW(cfg.validate(), kwl::ValidationError);
  cfg.n = 3;
  cfg.walkers = 0;
  EXPECT_THROW(cfg.validate(), kwl::ValidationError);
  cfg.walkers = 1;
  cfg.steps = 5;
  cfg.record_every = 6;
  EXPECT_THROW(cfg.validate(), kwl::ValidationError);
  cfg.record_every = 0;
  EXPECT_THROW(cfg.validate(), kwl::ValidationError);
  cfg.record_every = 5;
  EXPECT_NO_THROW(cfg.validate());
  cfg.walkers = 1'000'000;
  cfg.memory_budget_bytes = 1 << 20;
  EXPECT_THROW(cfg.validate(), kwl::ResourceError);
}

TEST(EmpiricalEta, StartsAtOne) {
  for (std::size_t n : {2u, 3u, 7u}) EXPECT_EQ(kwl::empirical_eta(n, 0, 1000, 110).at(0).eta_hat, 1.0);
}

TEST(EmpiricalEta, N2CoveredAfterOneStep) {
  EXPECT_EQ(kwl::empirical_eta(2, 1, 1000, 111).at(1).eta_hat, 0.0);
}

TEST(EmpiricalEta, N4MatchesInclusionExclusionAndBound) {
  const auto eta = kwl::empirical_eta(4, 30, 100000, 112);
  const double exact = coupon_tail_exact(6, 30);
  const double bound = kwl::bounds::eta_bound(4, 30).clamped;
  EXPECT_NEAR(bound, 6.0 * std::pow(5.0 / 6.0, 30), 1e-15);
  // the union bound exceeds the exact tail by ~1e-5, far below one standard error
  EXPECT_LT(exact, bound);
  EXPECT_LE(eta[30].eta_hat, bound + 4 * eta[30].se);
  EXPECT_TRUE(WithinSe(eta[30].eta_hat, exact, std::sqrt(exact * (1 - exact) / 1e5)));
}

TEST(EmpiricalEta, NonIncreasingAndDominated) {
  for (std::size_t n : {3u, 5u}) {
    const auto eta = kwl::empirical_eta(n, 150, 20000, 113 + n);
    for (std::size_t k = 1; k < eta.size(); ++k) {
      EXPECT_LE(eta[k].eta_hat, eta[k - 1].eta_hat);
      EXPECT_LE(eta[k].eta_hat, kwl::bounds::eta_bound(n, k).clamped + 4 * eta[k].se) << "n=" << n << " k=" << k;
    }
  }
}

kwl::EnsembleSnapshot snapshot_after(std::size_t n, std::size_t walkers, std::uint64_t k, std::uint64_t seed) {
  kwl::EnsembleConfig cfg;
  cfg.n = n;
  cfg.walkers = walkers;
  cfg.steps = k;
  cfg.seed = seed;
  cfg.record_every = k == 0 ? 1 : k;
  kwl::Ensemble ens(cfg);
  ens.advance(k);
  return ens.snapshot();
}

TEST(Conditional, AllCoveredIsIdentity) {
  const auto snap = snapshot_after(2, 500, 3, 114);
  ASSERT_EQ(snap.covered_count(), 500u);
  const auto c = kwl::conditional_snapshot(snap);
  EXPECT_EQ(c.points, snap.points);
  EXPECT_EQ(c.step, snap.step);
}

TEST(Conditional, NoneCoveredIsAnError) {
  const auto snap = snapshot_after(5, 100, 2, 115);
  EXPECT_THROW(kwl::conditional_snapshot(snap), kwl::ValidationError);
}

TEST(Conditional, SizeIsOneMinusEta) {
  const auto snap = snapshot_after(3, 100000, 40, 116);
  const auto c = kwl::conditional_snapshot(snap);
  const double eta_hat = 1.0 - static_cast<double>(snap.covered_count()) / 1e5;
  EXPECT_EQ(static_cast<double>(c.walkers()) / 1e5, 1.0 - eta_hat);
}

// |mu_k(B) - mu'_k(B)| <= eta_hat for coordinate half-spaces.
TEST(Conditional, TotalVariationSandwich) {
  const std::size_t n = 4, walkers = 100000;
  const auto snap = snapshot_after(n, walkers, 15, 117);
  const auto cond = kwl::conditional_snapshot(snap);
  const double eta_hat = 1.0 - static_cast<double>(cond.walkers()) / walkers;
  const double se = std::sqrt(eta_hat * (1 - eta_hat) / walkers);
  std::mt19937_64 gen(118);
  std::uniform_int_distribution<std::size_t> axis(0, n - 1);
  std::uniform_real_distribution<double> cut(-0.9, 0.9);
  for (int b = 0; b < 20; ++b) {
    const std::size_t i = axis(gen);
    const double t = cut(gen);
    const auto frac = [&](const kwl::EnsembleSnapshot& s) {
      std::size_t c = 0;
      for (std::size_t w = 0; w < s.walkers(); ++w) c += s.row(w)[i] > t;
      return static_cast<double>(c) / static_cast<double>(s.walkers());
    };
    EXPECT_LE(std::abs(frac(snap) - frac(cond)), eta_hat + 4 * se) << "B = {x" << i << " > " << t << "}";
  }
}

TEST(Parallel, AdvanceMatchesSerialBitForBit) {
  kwl::EnsembleConfig cfg;
  cfg.n = 6;
  cfg.walkers = 3001;
  cfg.steps = 2500;
  cfg.seed = 119;
  cfg.start = kwl::StartKind::Uniform;
  cfg.record_every = 2500;
  kwl::Ensemble a(cfg), b(cfg);
  kwl::set_thread_count(4);
  a.advance(2500);
  b.advance_serial(2500);
  EXPECT_EQ(a.snapshot().points, b.snapshot().points);
  EXPECT_EQ(a.snapshot().covered, b.snapshot().covered);
  kwl::set_thread_count(kwl::max_threads());
}

TEST(Parallel, CurveIndependentOfThreadCount) {
  kwl::EnsembleConfig cfg;
  cfg.n = 4;
  cfg.walkers = 20000;
  cfg.steps = 60;
  cfg.seed = 120;
  cfg.record_every = 15;
  std::vector<std::vector<std::vector<double>>> points;
  std::vector<kwl::MixingCurve> curves;
  const int default_threads = kwl::max_threads();
  for (int threads : {1, 2, 8}) {
    kwl::set_thread_count(threads);
    points.emplace_back();
    const std::vector<kwl::Observer> obs{kwl::metrics::tv_observer(20), kwl::metrics::moment_observer(4),
                                         kwl::metrics::h_eps_observer(0.05), kwl::metrics::eta_observer(),
                                         capture_points(points.back())};
    curves.push_back(kwl::run_ensemble(cfg, obs));
  }
  kwl::set_thread_count(1);
  points.emplace_back();
  const std::vector<kwl::Observer> obs{kwl::metrics::tv_observer(20), kwl::metrics::moment_observer(4),
                                       kwl::metrics::h_eps_observer(0.05), kwl::metrics::eta_observer(),
                                       capture_points(points.back())};
  curves.push_back(kwl::run_ensemble(cfg, obs, kwl::Execution::Serial));
  kwl::set_thread_count(default_threads);

  for (std::size_t v = 1; v < curves.size(); ++v) {
    EXPECT_EQ(points[v], points[0]);
    ASSERT_EQ(curves[v].rows.size(), curves[0].rows.size());
    for (std::size_t r = 0; r < curves[0].rows.size(); ++r) {
      const auto& x = curves[v].rows[r];
      const auto& y = curves[0].rows[r];
      EXPECT_EQ(x.tv_marginal, y.tv_marginal);
      EXPECT_EQ(x.tv_se, y.tv_se);
      EXPECT_EQ(x.h_eps_mass, y.h_eps_mass);
      EXPECT_EQ(x.eta_hat, y.eta_hat);
      for (const auto& [name, est] : y.obs) {
        EXPECT_EQ(x.obs.at(name).mean, est.mean) << name;
        EXPECT_EQ(x.obs.at(name).se, est.se) << name;
      }
    }
  }
}

}  // namespace
