#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "kwl/errors.hpp"
#include "kwl/random_stream.hpp"
#include "kwl/reduce.hpp"
#include "kwl/sphere.hpp"
#include "stat_check.hpp"

using kwl_test::WithinSe;

namespace {

constexpr double kPi = std::numbers::pi;

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST(Philox, KnownAnswerZero) {
  const auto out = kwl::philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = kwl::philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                                   {0xffffffff, 0xffffffff});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
}

TEST(Philox, KnownAnswerPi) {
  const auto out = kwl::philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                                   {0xa4093822, 0x299f31d0});
  EXPECT_EQ(out, (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RandomStream, CopiesForkIdenticalSequences) {
  kwl::RandomStream a(42, 7);
  for (int i = 0; i < 5; ++i) a();
  kwl::RandomStream b = a;
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
  EXPECT_EQ(a, b);
}

TEST(RandomStream, StreamsAndSeedsDiffer) {
  std::set<std::uint64_t> first;
  for (std::uint64_t seed = 0; seed < 4; ++seed)
    for (std::uint64_t s = 0; s < 64; ++s) first.insert(kwl::RandomStream(seed, s)());
  EXPECT_EQ(first.size(), 256u);
}

TEST(RandomStream, CounterPositionsTheSequence) {
  kwl::RandomStream a(3, 9);
  a.next_block();
  a.next_block();
  const auto third = a.next_block();
  kwl::RandomStream b(3, 9, 2);
  EXPECT_EQ(b.next_block(), third);
}

TEST(RandomStream, BelowStaysInRangeAndIsUniform) {
  kwl::RandomStream rng(11, 0);
  std::vector<std::size_t> counts(7, 0);
  const std::size_t draws = 700000;
  for (std::size_t d = 0; d < draws; ++d) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (auto c : counts) {
    const auto p = kwl_test::proportion(c, draws);
    EXPECT_TRUE(WithinSe(p.mean, 1.0 / 7.0, p.se));
  }
}

TEST(RandomStream, UniformInUnitInterval) {
  kwl::RandomStream rng(5, 5);
  std::vector<double> v(200000);
  for (double& x : v) {
    x = rng.uniform();
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
  }
  const auto m = kwl_test::moments(v);
  EXPECT_TRUE(WithinSe(m.mean, 0.5, m.se));
}

TEST(SpherePoint, RejectsOffSphereAndLowDimension) {
  EXPECT_THROW(kwl::SpherePoint({1.0, 1e-5}), kwl::ValidationError);
  EXPECT_THROW(kwl::SpherePoint({1.0}), kwl::ValidationError);
  EXPECT_NO_THROW(kwl::SpherePoint({0.6, 0.8}));
  EXPECT_THROW(kwl::SpherePoint::normalized({0.0, 0.0, 0.0}), kwl::ValidationError);
  EXPECT_THROW(kwl::SpherePoint::basis(3, 3), kwl::ValidationError);
}

TEST(Rotate, QuarterTurnMapsE1ToE2) {
  const auto y = kwl::rotate(kwl::SpherePoint::basis(3, 0), kwl::RotationEvent(0, 1, kPi / 2));
  EXPECT_NEAR(y[0], 0.0, 1e-15);
  EXPECT_NEAR(y[1], 1.0, 1e-15);
  EXPECT_EQ(y[2], 0.0);
}

TEST(Rotate, ZeroAngleIsExactIdentity) {
  kwl::RandomStream rng(1, 1);
  for (int t = 0; t < 100; ++t) {
    const auto x = kwl::sample_uniform_sphere(5, rng);
    EXPECT_EQ(kwl::rotate(x, kwl::RotationEvent(1, 3, 0.0)), x);
  }
}

TEST(Rotate, SwappedAxesNegateTheAngle) {
  const kwl::RotationEvent ev(2, 0, 0.7);
  EXPECT_EQ(ev.i, 0u);
  EXPECT_EQ(ev.j, 2u);
  EXPECT_NEAR(ev.theta, 2 * kPi - 0.7, 1e-15);
}

TEST(Rotate, InvalidEventsThrow) {
  EXPECT_THROW(kwl::RotationEvent(1, 1, 0.1), kwl::ValidationError);
  EXPECT_THROW(kwl::RotationEvent(0, 1, std::nan("")), kwl::ValidationError);
  EXPECT_THROW(kwl::RotationEvent(0, 1, INFINITY), kwl::ValidationError);
  const auto x = kwl::SpherePoint::basis(3, 0);
  EXPECT_THROW(kwl::rotate(x, kwl::RotationEvent(0, 3, 0.1)), kwl::ValidationError);
  kwl::RotationEvent bad;
  bad.theta = std::nan("");
  EXPECT_THROW(kwl::rotate(x, bad), kwl::ValidationError);
}

// Oracle: explicit 2x2 rotation matrices multiplied out by hand.
TEST(Rotate, CompositionMatchesMatrixProduct) {
  kwl::RandomStream rng(2, 2);
  for (int t = 0; t < 200; ++t) {
    const double a = 2 * kPi * rng.uniform();
    const double b = 2 * kPi * rng.uniform();
    const auto x = kwl::sample_uniform_sphere(2, rng);
    const auto y = kwl::rotate(kwl::rotate(x, kwl::RotationEvent(0, 1, a)), kwl::RotationEvent(0, 1, b));
    const double m00 = std::cos(b) * std::cos(a) - std::sin(b) * std::sin(a);
    const double m01 = -std::cos(b) * std::sin(a) - std::sin(b) * std::cos(a);
    const double m10 = std::sin(b) * std::cos(a) + std::cos(b) * std::sin(a);
    const double m11 = -std::sin(b) * std::sin(a) + std::cos(b) * std::cos(a);
    EXPECT_NEAR(y[0], m00 * x[0] + m01 * x[1], 1e-12);
    EXPECT_NEAR(y[1], m10 * x[0] + m11 * x[1], 1e-12);
  }
}

TEST(Rotate, PreservesNormAndOtherCoordinates) {
  kwl::RandomStream rng(3, 3);
  for (int t = 0; t < 1000; ++t) {
    const auto x = kwl::sample_uniform_sphere(6, rng);
    const auto ev = kwl::draw_rotation_event(6, rng);
    const auto y = kwl::rotate(x, ev);
    EXPECT_NEAR(kwl::squared_norm(y.coords()), 1.0, 1e-14);
    for (std::size_t k = 0; k < 6; ++k)
      if (k != ev.i && k != ev.j) EXPECT_EQ(y[k], x[k]);
  }
}

// 10^6 rotations without re-projection stay within 1e-9 of the sphere.
TEST(Rotate, DriftOverManyRotations) {
  kwl::RandomStream rng(4, 4);
  std::vector<double> x(5, 0.0);
  x[0] = 1.0;
  const kwl::PairTable pairs(5);
  for (int t = 0; t < 1'000'000; ++t) {
    const auto ev = kwl::draw_event_raw(pairs.size(), rng);
    const auto p = pairs[ev.pair];
    kwl::rotate_in_place(x, p.i, p.j, std::cos(ev.theta), std::sin(ev.theta));
  }
  EXPECT_LE(std::abs(std::sqrt(kwl::squared_norm(x)) - 1.0), 1e-9);
  kwl::renormalize(x);
  EXPECT_NEAR(kwl::squared_norm(x), 1.0, 1e-15);
}

TEST(Sampler, CoordinateMeansVanish) {
  kwl::RandomStream rng(6, 0);
  const std::size_t n = 3, draws = 1'000'000;
  std::vector<std::vector<double>> c(n, std::vector<double>(draws));
  for (std::size_t d = 0; d < draws; ++d) {
    const auto x = kwl::sample_uniform_sphere(n, rng);
    for (std::size_t i = 0; i < n; ++i) c[i][d] = x[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = kwl_test::moments(c[i]);
    EXPECT_TRUE(WithinSe(m.mean, 0.0, m.se)) << "coordinate " << i;
  }
}

// E[x_1^2] = 1/n and E[x_1^4] = 3/(n(n+2)) for the uniform measure.
TEST(Sampler, SecondAndFourthMoments) {
  kwl::RandomStream rng(6, 1);
  const std::size_t draws = 1'000'000;
  std::vector<double> sq(draws), quad(draws);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto x = kwl::sample_uniform_sphere(5, rng);
    sq[d] = x[0] * x[0];
    const auto y = kwl::sample_uniform_sphere(4, rng);
    quad[d] = y[0] * y[0] * y[0] * y[0];
  }
  const auto m2 = kwl_test::moments(sq);
  const auto m4 = kwl_test::moments(quad);
  EXPECT_TRUE(WithinSe(m2.mean, 0.2, m2.se));
  EXPECT_TRUE(WithinSe(m4.mean, 0.125, m4.se));
}

// Kolmogorov-Smirnov against closed-form marginal CDFs; 1.949 is the
// asymptotic 0.999 quantile of sqrt(N) D.
double ks_statistic(std::vector<double> v, double (*cdf)(double)) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d * std::sqrt(n);
}

TEST(Sampler, KolmogorovSmirnovN3Uniform) {
  kwl::RandomStream rng(7, 0);
  std::vector<double> v(1'000'000);
  for (double& x : v) x = kwl::sample_uniform_sphere(3, rng)[0];
  EXPECT_LT(ks_statistic(v, [](double t) { return 0.5 * (t + 1.0); }), 1.949);
}

TEST(Sampler, KolmogorovSmirnovN5) {
  kwl::RandomStream rng(7, 1);
  std::vector<double> v(1'000'000);
  for (double& x : v) x = kwl::sample_uniform_sphere(5, rng)[2];
  // density (3/4)(1 - t^2)
  EXPECT_LT(ks_statistic(v, [](double t) { return 0.5 + 0.75 * (t - t * t * t / 3.0); }), 1.949);
}

TEST(Sampler, SameStreamSameDraws) {
  kwl::RandomStream a(8, 3), b(8, 3);
  for (int t = 0; t < 100; ++t) EXPECT_EQ(kwl::sample_uniform_sphere(7, a), kwl::sample_uniform_sphere(7, b));
}

TEST(Sampler, RejectsDimensionBelowTwo) {
  kwl::RandomStream rng(1, 1);
  EXPECT_THROW(kwl::sample_uniform_sphere(1, rng), kwl::ValidationError);
}

TEST(PairTable, IndexRoundTrip) {
  for (std::size_t n = 2; n <= 12; ++n) {
    const kwl::PairTable t(n);
    ASSERT_EQ(t.size(), kwl::pair_count(n));
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j, ++idx) {
        EXPECT_EQ(t[idx].i, i);
        EXPECT_EQ(t[idx].j, j);
        EXPECT_EQ(t.index_of(i, j), idx);
        EXPECT_EQ(t.index_of(j, i), idx);
      }
  }
  EXPECT_THROW(kwl::PairTable(3).index_of(1, 1), kwl::ValidationError);
}

TEST(DrawEvent, N2AlwaysUsesTheOnlyPair) {
  kwl::RandomStream rng(9, 0);
  for (int t = 0; t < 1000; ++t) {
    const auto ev = kwl::draw_rotation_event(2, rng);
    EXPECT_EQ(ev.i, 0u);
    EXPECT_EQ(ev.j, 1u);
  }
}

TEST(DrawEvent, N3PairsAreUniform) {
  kwl::RandomStream rng(9, 1);
  const std::size_t draws = 300000;
  std::array<std::size_t, 3> counts{};
  for (std::size_t d = 0; d < draws; ++d) {
    std::uint64_t idx = 0;
    kwl::draw_rotation_event(3, rng, &idx);
    ++counts[idx];
  }
  for (auto c : counts) {
    const auto p = kwl_test::proportion(c, draws);
    EXPECT_TRUE(WithinSe(p.mean, 1.0 / 3.0, p.se));
  }
}

TEST(DrawEvent, AngleMeanIsPi) {
  for (std::size_t n : {2u, 5u, 30u}) {
    kwl::RandomStream rng(10, n);
    std::vector<double> th(100000);
    for (double& t : th) {
      t = kwl::draw_rotation_event(n, rng).theta;
      ASSERT_GE(t, 0.0);
      ASSERT_LT(t, 2 * kPi);
    }
    const auto m = kwl_test::moments(th);
    EXPECT_TRUE(WithinSe(m.mean, kPi, m.se)) << "n=" << n;
  }
}

TEST(DrawEvent, OneBlockPerEvent) {
  kwl::RandomStream rng(12, 0);
  kwl::draw_rotation_event(9, rng);
  kwl::draw_rotation_event(9, rng);
  EXPECT_EQ(rng.counter(), 2u);
}

TEST(Reduce, PairwiseSumIsExactOnIntegers) {
  std::vector<double> v(10007);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  EXPECT_EQ(kwl::pairwise_sum(v), 10006.0 * 10007.0 / 2.0);
  EXPECT_EQ(kwl::pairwise_sum({}), 0.0);
}

TEST(Reduce, MeanAndStandardError) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto e = kwl::mean_and_se(v);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_NEAR(e.se, std::sqrt((1.25 * 4.0 / 3.0) / 4.0), 1e-15);
}

}  // namespace
