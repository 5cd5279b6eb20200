#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace kwl::bounds {

/// Union bound on P(some pair unused after k steps), raw and clamped to [0, 1].
struct EtaBound {
  double raw;
  double clamped;
};
EtaBound eta_bound(std::uint64_t n, std::uint64_t k);

/// Density of one coordinate of a uniform point on S^{n-1}, n >= 3:
/// c_n (1 - t^2)^{(n-3)/2}, c_n = Gamma(n/2) / (Gamma((n-1)/2) Gamma(1/2)).
double coordinate_marginal_pdf(std::uint64_t n, double t);
double coordinate_marginal_constant(std::uint64_t n);

/// P(x_1 <= t) for x uniform on S^{n-1}; valid for n >= 2.
double coordinate_marginal_cdf(std::uint64_t n, double t);

/// P(|x_1| < eps) for x uniform on S^{n-1}.
double coordinate_band_mass(std::uint64_t n, double eps);

struct HEpsMass {
  double union_bound;  // n * P(|x_1| < eps)
  double dimension_bound;  // n^{3/2} eps
  double mc_estimate;
  double mc_se;
};

/// Mass of H_eps = {x : min_i |x_i| < eps} under the uniform measure.
HEpsMass uniform_mass_H_eps(std::uint64_t n, double epsilon, std::uint64_t samples = 1'000'000,
                            std::uint64_t seed = 0x48657073ULL);

struct GammaRatio {
  double lhs;    // Gamma(n/2) / Gamma((n-1)/2)
  double rhs;    // sqrt((n-2)/2)
  double ratio;  // lhs / rhs
  bool holds;
};
GammaRatio gamma_ratio_check(std::uint64_t n);

/// (n+2) / (2n(n-1)).
double spectral_gap(std::uint64_t n);

/// (n-2)/(n-1): one-step contraction of E[x_1^2 - 1/n].
double quadratic_eigenvalue(std::uint64_t n);

struct Claim1Params {
  double C = 1.0;
  std::uint64_t k = 1;
  std::uint64_t n = 3;
  double xmin = 0.5;
};

/// ln( C^k k^{k^2} xmin^{-n} (-ln xmin)^k ); -inf once the log factor vanishes.
double claim1_density_bound(const Claim1Params& p);

/// ln( xmin^{-n} (sum_i (-ln|x_i|)^k) C^k prod_{m=1}^k m! ), the unsimplified form.
/// `coords` must have every |x_i| in (0, 1).
double claim1_density_bound_product_form(double C, std::uint64_t k, const double* coords,
                                         std::uint64_t n);

/// Contraction rate used by the L^2 summand of the final bound.
enum class GapRate {
  HalfOverN,   // 1/(2n): lower bound on the gap quoted with the kernel
  OneOverN,    // 1/n: the rate used in the spectral step of the TV bound
  ExactGap,    // (n+2)/(2n(n-1))
};
double gap_rate_value(GapRate rate, std::uint64_t n);
GapRate parse_gap_rate(const std::string& name);
std::string to_string(GapRate rate);

struct FinalTvBound {
  std::array<double, 4> summands;  // eta, n^{3/2} eps, eps^{1/4}, L^2 term
  double log_l2_term;              // natural log of summands[3]
  double total;
};

FinalTvBound final_tv_bound(std::uint64_t n, std::uint64_t k, std::uint64_t l, double epsilon,
                            double C, GapRate rate = GapRate::OneOverN);

struct BoundSchedule {
  std::uint64_t n;
  double delta;
  double C;
  double Cprime;
  GapRate rate;
  std::uint64_t k;
  double epsilon;
  std::uint64_t l;
  std::uint64_t total;
  FinalTvBound bound;
  double cprime_budget;  // Cprime n^5 (ln n)^3 (ln 1/delta)^3
  bool within_cprime;
};

/// Chooses (k, eps, l) so that every summand of the final bound is <= delta.
BoundSchedule mixing_bound_schedule(std::uint64_t n, double delta, double C = 1.0,
                                    double Cprime = 1.0, GapRate rate = GapRate::OneOverN);

}  // namespace kwl::bounds
