#include "kwl/exact_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "kwl/errors.hpp"
#include "kwl/random_stream.hpp"
#include "kwl/sphere.hpp"

namespace kwl::bounds {

namespace {

using real = long double;

constexpr double kInf = std::numeric_limits<double>::infinity();

real ln(real x) { return std::log(x); }

double exp_or_inf(real log_value) {
  if (log_value > static_cast<real>(std::log(std::numeric_limits<double>::max()))) return kInf;
  return static_cast<double>(std::exp(log_value));
}

// ln of C^k k^{k^2} eps^{-n} (-ln eps)^k, the l-independent part of the L^2 term.
real log_density_factor(real C, std::uint64_t k, std::uint64_t n, real x) {
  const real neg_log_x = -std::log1p(x - 1.0L);
  if (neg_log_x <= 0) return -std::numeric_limits<real>::infinity();
  const real kk = static_cast<real>(k);
  return kk * ln(C) + kk * kk * ln(kk) - static_cast<real>(n) * ln(x) + kk * ln(neg_log_x);
}

}  // namespace

EtaBound eta_bound(std::uint64_t n, std::uint64_t k) {
  if (n < 2) throw ValidationError("eta_bound: n must be >= 2");
  const real pairs = static_cast<real>(pair_count(n));
  real raw;
  if (pairs == 1)
    raw = (k == 0) ? 1 : 0;
  else
    raw = pairs * std::exp(static_cast<real>(k) * std::log1p(-1 / pairs));
  const double r = static_cast<double>(raw);
  return {r, std::min(1.0, r)};
}

double coordinate_marginal_constant(std::uint64_t n) {
  if (n < 2) throw ValidationError("coordinate_marginal_constant: n must be >= 2");
  const real nn = static_cast<real>(n);
  return static_cast<double>(std::exp(std::lgamma(nn / 2) - std::lgamma((nn - 1) / 2) -
                                      std::lgamma(0.5L)));
}

double coordinate_marginal_pdf(std::uint64_t n, double t) {
  if (n < 3) throw ValidationError("coordinate_marginal_pdf: n must be >= 3");
  if (!(std::abs(t) <= 1.0)) throw ValidationError("coordinate_marginal_pdf: |t| > 1");
  const double c = coordinate_marginal_constant(n);
  if (n == 3) return c;
  return c * std::pow(1.0 - t * t, 0.5 * (static_cast<double>(n) - 3.0));
}

double coordinate_marginal_cdf(std::uint64_t n, double t) {
  if (n < 2) throw ValidationError("coordinate_marginal_cdf: n must be >= 2");
  if (t <= -1.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double half_band =
      0.5 * boost::math::ibeta(0.5, 0.5 * (static_cast<double>(n) - 1.0), t * t);
  return t >= 0.0 ? 0.5 + half_band : 0.5 - half_band;
}

double coordinate_band_mass(std::uint64_t n, double eps) {
  if (n < 2) throw ValidationError("coordinate_band_mass: n must be >= 2");
  if (eps <= 0.0) return 0.0;
  if (eps >= 1.0) return 1.0;
  return boost::math::ibeta(0.5, 0.5 * (static_cast<double>(n) - 1.0), eps * eps);
}

HEpsMass uniform_mass_H_eps(std::uint64_t n, double epsilon, std::uint64_t samples,
                            std::uint64_t seed) {
  if (n < 2) throw ValidationError("uniform_mass_H_eps: n must be >= 2");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ValidationError("uniform_mass_H_eps: epsilon must lie in (0, 1)");
  if (samples == 0) throw ValidationError("uniform_mass_H_eps: need at least one sample");
  HEpsMass out{};
  out.union_bound = static_cast<double>(n) * coordinate_band_mass(n, epsilon);
  out.dimension_bound = std::pow(static_cast<double>(n), 1.5) * epsilon;

  RandomStream rng(seed, 0);
  std::vector<double> x(n);
  std::uint64_t hits = 0;
  for (std::uint64_t s = 0; s < samples; ++s) {
    sample_uniform_sphere_into(x, rng);
    double m = 1.0;
    for (double v : x) m = std::min(m, std::abs(v));
    hits += m < epsilon;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  out.mc_estimate = p;
  out.mc_se = std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  return out;
}

GammaRatio gamma_ratio_check(std::uint64_t n) {
  if (n < 3) throw ValidationError("gamma_ratio_check: n must be >= 3");
  const real nn = static_cast<real>(n);
  // direct ratio; exp(lgamma - lgamma) loses ~1e-13 near n = 1e6
  const real lhs = boost::math::tgamma_ratio(nn / 2, (nn - 1) / 2);
  const real rhs = std::sqrt((nn - 2) / 2);
  return {static_cast<double>(lhs), static_cast<double>(rhs), static_cast<double>(lhs / rhs),
          lhs > rhs};
}

double spectral_gap(std::uint64_t n) {
  if (n < 2) throw ValidationError("spectral_gap: n must be >= 2");
  const double nn = static_cast<double>(n);
  return (nn + 2.0) / (2.0 * nn * (nn - 1.0));
}

double quadratic_eigenvalue(std::uint64_t n) {
  if (n < 2) throw ValidationError("quadratic_eigenvalue: n must be >= 2");
  const double nn = static_cast<double>(n);
  return (nn - 2.0) / (nn - 1.0);
}

double claim1_density_bound(const Claim1Params& p) {
  if (!(p.C > 0.0)) throw ValidationError("claim1_density_bound: C must be positive");
  if (p.k < 1) throw ValidationError("claim1_density_bound: k must be >= 1");
  if (!(p.xmin > 0.0)) throw ValidationError("claim1_density_bound: xmin must be positive");
  if (!(p.xmin < 1.0))
    throw ValidationError("claim1_density_bound: xmin >= 1 makes the log factor nonpositive");
  return static_cast<double>(log_density_factor(p.C, p.k, p.n, p.xmin));
}

double claim1_density_bound_product_form(double C, std::uint64_t k, const double* coords,
                                         std::uint64_t n) {
  if (!(C > 0.0) || k < 1 || n < 1)
    throw ValidationError("claim1_density_bound_product_form: invalid parameters");
  real xmin = 1;
  std::vector<real> logs(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const real a = std::abs(static_cast<real>(coords[i]));
    if (!(a > 0 && a < 1))
      throw ValidationError("claim1_density_bound_product_form: |x_i| must lie in (0, 1)");
    xmin = std::min(xmin, a);
    logs[i] = static_cast<real>(k) * ln(-ln(a));
  }
  const real top = *std::max_element(logs.begin(), logs.end());
  real acc = 0;
  for (real v : logs) acc += std::exp(v - top);
  real log_prod_factorials = 0;
  for (std::uint64_t m = 1; m <= k; ++m) log_prod_factorials += std::lgamma(static_cast<real>(m) + 1);
  const real value = -static_cast<real>(n) * ln(xmin) + top + ln(acc) +
                     static_cast<real>(k) * ln(static_cast<real>(C)) + log_prod_factorials;
  return static_cast<double>(value);
}

double gap_rate_value(GapRate rate, std::uint64_t n) {
  const double nn = static_cast<double>(n);
  switch (rate) {
    case GapRate::HalfOverN:
      return 1.0 / (2.0 * nn);
    case GapRate::OneOverN:
      return 1.0 / nn;
    case GapRate::ExactGap:
      return spectral_gap(n);
  }
  return 1.0 / nn;
}

GapRate parse_gap_rate(const std::string& name) {
  if (name == "paper-2") return GapRate::HalfOverN;
  if (name == "paper-1overN") return GapRate::OneOverN;
  if (name == "exact-gap") return GapRate::ExactGap;
  throw ValidationError("unknown rate '" + name + "' (expected paper-2, paper-1overN, exact-gap)");
}

std::string to_string(GapRate rate) {
  switch (rate) {
    case GapRate::HalfOverN:
      return "paper-2";
    case GapRate::OneOverN:
      return "paper-1overN";
    case GapRate::ExactGap:
      return "exact-gap";
  }
  return "paper-1overN";
}

FinalTvBound final_tv_bound(std::uint64_t n, std::uint64_t k, std::uint64_t l, double epsilon,
                            double C, GapRate rate) {
  if (n < 2) throw ValidationError("final_tv_bound: n must be >= 2");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ValidationError("final_tv_bound: epsilon must lie in (0, 1)");
  if (k < 1 || l < 1) throw ValidationError("final_tv_bound: k and l must be >= 1");
  if (!(C > 0.0)) throw ValidationError("final_tv_bound: C must be positive");

  FinalTvBound out{};
  out.summands[0] = eta_bound(n, k).raw;
  out.summands[1] = std::pow(static_cast<double>(n), 1.5) * epsilon;
  out.summands[2] = std::pow(epsilon, 0.25);
  const real step_log = std::log1p(-static_cast<real>(gap_rate_value(rate, n)));
  out.log_l2_term = static_cast<double>(log_density_factor(C, k, n, epsilon) +
                                        static_cast<real>(l) * step_log);
  out.summands[3] = exp_or_inf(out.log_l2_term);
  out.total = out.summands[0] + out.summands[1] + out.summands[2] + out.summands[3];
  return out;
}

BoundSchedule mixing_bound_schedule(std::uint64_t n, double delta, double C, double Cprime,
                                    GapRate rate) {
  if (n < 3) throw ValidationError("mixing_bound_schedule: n must be >= 3");
  if (!(delta > 0.0 && delta < 1.0 / std::numbers::e))
    throw ValidationError("mixing_bound_schedule: delta must lie in (0, 1/e)");
  if (!(C > 0.0)) throw ValidationError("mixing_bound_schedule: C must be positive");

  BoundSchedule s{};
  s.n = n;
  s.delta = delta;
  s.C = C;
  s.Cprime = Cprime;
  s.rate = rate;

  const real nn = static_cast<real>(n);
  const real log_inv_delta = -ln(static_cast<real>(delta));
  s.k = static_cast<std::uint64_t>(std::ceil(nn * nn * ln(nn) * log_inv_delta));
  s.epsilon = static_cast<double>(std::pow(static_cast<real>(delta), 4) * std::pow(nn, -1.5L) / 4);

  // Smallest l with A + l ln(1 - rate) <= ln(delta).
  const real step_log = std::log1p(-static_cast<real>(gap_rate_value(rate, n)));
  const real excess = log_density_factor(C, s.k, n, s.epsilon) + log_inv_delta;
  real l_real = excess <= 0 ? 1 : std::ceil(excess / -step_log);
  if (!(l_real <= 1e18L))
    throw ResourceError("mixing_bound_schedule: the L^2 summand needs more than 1e18 spectral "
                        "steps to fall below delta");
  s.l = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(l_real));
  s.bound = final_tv_bound(n, s.k, s.l, s.epsilon, C, rate);
  while (s.bound.summands[3] > delta) {
    ++s.l;
    s.bound = final_tv_bound(n, s.k, s.l, s.epsilon, C, rate);
  }
  while (s.l > 1) {
    const auto tighter = final_tv_bound(n, s.k, s.l - 1, s.epsilon, C, rate);
    if (tighter.summands[3] > delta) break;
    --s.l;
    s.bound = tighter;
  }
  s.total = s.k + s.l;
  const real ln_n = ln(nn);
  s.cprime_budget = static_cast<double>(static_cast<real>(Cprime) * std::pow(nn, 5) *
                                        ln_n * ln_n * ln_n * log_inv_delta * log_inv_delta *
                                        log_inv_delta);
  s.within_cprime = static_cast<double>(s.total) <= s.cprime_budget;
  return s;
}

}  // namespace kwl::bounds
