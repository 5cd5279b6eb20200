#include "kwl/mixing_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include "kwl/errors.hpp"
#include "kwl/exact_bounds.hpp"
#include "kwl/sphere.hpp"

namespace kwl::metrics {

namespace {

double ground(std::span<const double> x, std::span<const double> y, GroundMetric metric) {
  if (metric == GroundMetric::Chordal) {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double diff = x[d] - y[d];
      s += diff * diff;
    }
    return s;
  }
  double dot = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) dot += x[d] * y[d];
  const double angle = std::acos(std::clamp(dot, -1.0, 1.0));
  return angle * angle;
}

// Shortest-augmenting-path Hungarian method on a dense square cost matrix.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t m) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(m + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (std::size_t i = 1; i <= m; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      const double* row = cost.data() + (i0 - 1) * m;
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> match(m);
  for (std::size_t j = 1; j <= m; ++j) match[p[j] - 1] = j - 1;
  return match;
}

void check_fraction_eps(double epsilon, const char* who) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ValidationError(std::string(who) + ": epsilon must lie in (0, 1)");
}

}  // namespace

TvEstimate tv_marginal_estimate(const PointSet& samples, std::size_t bins) {
  if (bins < 1) throw ValidationError("tv_marginal_estimate: bins must be >= 1");
  const std::size_t m = samples.size();
  if (m < 10 * bins)
    throw ValidationError("tv_marginal_estimate: need at least 10 samples per bin (" +
                          std::to_string(m) + " samples for " + std::to_string(bins) + " bins)");
  std::vector<std::uint64_t> counts(bins, 0);
  for (std::size_t s = 0; s < m; ++s) {
    const double x = samples.coords[s * samples.n];
    auto b = static_cast<std::int64_t>(std::floor((x + 1.0) * 0.5 * static_cast<double>(bins)));
    b = std::clamp<std::int64_t>(b, 0, static_cast<std::int64_t>(bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  double tv = 0.0, sp = 0.0, s2p = 0.0;
  double lo_cdf = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double hi_edge = -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(bins);
    const double hi_cdf = b + 1 == bins ? 1.0 : bounds::coordinate_marginal_cdf(samples.n, hi_edge);
    const double q = hi_cdf - lo_cdf;
    lo_cdf = hi_cdf;
    const double p = static_cast<double>(counts[b]) / static_cast<double>(m);
    tv += std::abs(p - q);
    const double sign = p > q ? 1.0 : (p < q ? -1.0 : 0.0);
    sp += sign * p;
    s2p += sign * sign * p;
  }
  const double var = std::max(0.0, s2p - sp * sp) / (4.0 * static_cast<double>(m));
  return {0.5 * tv, std::sqrt(var)};
}

double h_eps_mass(const PointSet& samples, double epsilon) {
  check_fraction_eps(epsilon, "h_eps_mass");
  const std::size_t m = samples.size();
  if (m == 0) throw ValidationError("h_eps_mass: empty sample");
  std::size_t hits = 0;
  for (std::size_t s = 0; s < m; ++s) {
    const auto r = samples.row(s);
    bool in = false;
    for (double v : r) in = in || std::abs(v) < epsilon;
    hits += in;
  }
  return static_cast<double>(hits) / static_cast<double>(m);
}

double TransportPlanResult::w2() const { return std::sqrt(cost); }

double matching_cost(const PointSet& a, const PointSet& b, std::span<const std::size_t> matching,
                     GroundMetric metric) {
  const std::size_t m = a.size();
  if (matching.size() != m || b.size() != m)
    throw ValidationError("matching_cost: size mismatch");
  std::vector<double> d(m);
  for (std::size_t i = 0; i < m; ++i) d[i] = ground(a.row(i), b.row(matching[i]), metric);
  return pairwise_sum(d) / static_cast<double>(m);
}

TransportPlanResult wasserstein_estimate(const PointSet& a, const PointSet& b, TransportMode mode,
                                         const TransportOptions& opts) {
  if (a.n != b.n) throw ValidationError("wasserstein_estimate: dimension mismatch");
  const std::size_t m = a.size();
  if (m != b.size()) throw ValidationError("wasserstein_estimate: point sets differ in size");
  if (m == 0) throw ValidationError("wasserstein_estimate: empty point sets");

  TransportPlanResult out;
  if (mode == TransportMode::Exact) {
    if (m > kExactTransportLimit)
      throw ResourceError("wasserstein_estimate: exact mode is limited to " +
                          std::to_string(kExactTransportLimit) + " points (got " +
                          std::to_string(m) + "); use sliced mode");
    std::vector<double> cost(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = ground(a.row(i), b.row(j), opts.metric);
    out.matching = solve_assignment(cost, m);
    out.cost = matching_cost(a, b, out.matching, opts.metric);
    return out;
  }

  if (opts.projections < 1) throw ValidationError("wasserstein_estimate: need >= 1 projection");
  std::vector<double> dir(a.n), pa(m), pb(m);
  std::vector<std::size_t> oa(m), ob(m), candidate(m);
  out.cost = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < opts.projections; ++p) {
    RandomStream rng(opts.seed, p);
    sample_uniform_sphere_into(dir, rng);
    for (std::size_t i = 0; i < m; ++i) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t d = 0; d < a.n; ++d) {
        sa += dir[d] * a.coords[i * a.n + d];
        sb += dir[d] * b.coords[i * b.n + d];
      }
      pa[i] = sa;
      pb[i] = sb;
    }
    std::iota(oa.begin(), oa.end(), 0);
    std::iota(ob.begin(), ob.end(), 0);
    std::stable_sort(oa.begin(), oa.end(), [&](auto x, auto y) { return pa[x] < pa[y]; });
    std::stable_sort(ob.begin(), ob.end(), [&](auto x, auto y) { return pb[x] < pb[y]; });
    for (std::size_t r = 0; r < m; ++r) candidate[oa[r]] = ob[r];
    const double c = matching_cost(a, b, candidate, opts.metric);
    if (c < out.cost) {
      out.cost = c;
      out.matching = candidate;
    }
  }
  return out;
}

DecayFit observable_decay(const MixingCurve& curve, const std::string& name,
                          const DecayFitOptions& opts) {
  const auto stat_it = curve.stationary.find(name);
  if (stat_it == curve.stationary.end())
    throw ValidationError("observable_decay: observable '" + name + "' was not recorded");
  const double stationary = stat_it->second;
  std::size_t recorded = 0;
  for (const auto& row : curve.rows) recorded += row.obs.count(name);
  if (recorded < 10)
    throw ValidationError("observable_decay: '" + name + "' recorded at fewer than 10 steps");

  const std::uint64_t burn_in =
      opts.burn_in < 0 ? 2 * curve.n : static_cast<std::uint64_t>(opts.burn_in);
  const double floor = 1e-12 * std::max(1.0, std::abs(stationary));

  std::vector<double> ks, ys, ws;
  for (const auto& row : curve.rows) {
    if (row.step < burn_in) continue;
    const auto it = row.obs.find(name);
    if (it == row.obs.end()) continue;
    const double signal = std::abs(it->second.mean - stationary);
    if (!(signal > opts.min_snr * it->second.se) || !(signal > floor)) break;
    ks.push_back(static_cast<double>(row.step));
    ys.push_back(std::log(signal));
    // delta method: Var[ln|m|] ~ (se / m)^2; exact rows (se = 0) get the largest weight
    const double rel = std::max(it->second.se / signal, 1e-9);
    ws.push_back(opts.weighted ? 1.0 / (rel * rel) : 1.0);
  }
  if (ks.size() < std::max<std::size_t>(opts.min_points, 2))
    throw ValidationError("observable_decay: no valid window for '" + name +
                          "' (signal below the noise floor after burn-in)");

  const double wsum = std::accumulate(ws.begin(), ws.end(), 0.0);
  double kbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    kbar += ws[i] * ks[i];
    ybar += ws[i] * ys[i];
  }
  kbar /= wsum;
  ybar /= wsum;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    sxx += ws[i] * (ks[i] - kbar) * (ks[i] - kbar);
    sxy += ws[i] * (ks[i] - kbar) * (ys[i] - ybar);
    syy += ws[i] * (ys[i] - ybar) * (ys[i] - ybar);
  }
  DecayFit fit{};
  fit.rate = sxy / sxx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.first_step = static_cast<std::uint64_t>(ks.front());
  fit.last_step = static_cast<std::uint64_t>(ks.back());
  fit.points = ks.size();
  return fit;
}

Observer tv_observer(std::size_t bins) {
  return [bins](const EnsembleSnapshot& snap, MixingRow& row, MixingCurve&) {
    const auto est = tv_marginal_estimate(PointSet::of(snap), bins);
    row.tv_marginal = est.tv;
    row.tv_se = est.se;
  };
}

Observer h_eps_observer(double epsilon) {
  check_fraction_eps(epsilon, "h_eps_observer");
  return [epsilon](const EnsembleSnapshot& snap, MixingRow& row, MixingCurve&) {
    row.h_eps_mass = h_eps_mass(PointSet::of(snap), epsilon);
  };
}

Observer eta_observer() {
  return [](const EnsembleSnapshot& snap, MixingRow& row, MixingCurve&) {
    row.eta_hat = 1.0 - static_cast<double>(snap.covered_count()) /
                            static_cast<double>(snap.walkers());
  };
}

Observer moment_observer(std::size_t coordinates) {
  return [coordinates](const EnsembleSnapshot& snap, MixingRow& row, MixingCurve& curve) {
    const std::size_t m = snap.walkers();
    const std::size_t n = snap.n;
    const double nn = static_cast<double>(n);
    std::vector<double> v1(m), v2(m), v4(m), scratch(m);
    const auto walkers = static_cast<std::int64_t>(m);
    for (std::size_t i = 0; i < std::min(coordinates, n); ++i) {
#pragma omp parallel for schedule(static)
      for (std::int64_t w = 0; w < walkers; ++w) {
        const double x = snap.points[static_cast<std::size_t>(w) * n + i];
        const double x2 = x * x;
        v1[w] = x;
        v2[w] = x2;
        v4[w] = x2 * x2;
      }
      const std::string base = "x" + std::to_string(i + 1);
      row.obs[base] = mean_and_se(v1, scratch);
      row.obs[base + "sq"] = mean_and_se(v2, scratch);
      row.obs[base + "quad"] = mean_and_se(v4, scratch);
      curve.stationary[base] = 0.0;
      curve.stationary[base + "sq"] = 1.0 / nn;
      curve.stationary[base + "quad"] = 3.0 / (nn * (nn + 2.0));
    }
  };
}

std::vector<double> uniform_cloud(std::size_t n, std::size_t count, std::uint64_t seed,
                                  std::uint64_t first_stream) {
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < count; ++i) {
    RandomStream rng(seed, first_stream + i);
    sample_uniform_sphere_into(std::span(out.data() + i * n, n), rng);
  }
  return out;
}

Observer w2_observer(TransportMode mode, std::size_t size, std::uint64_t seed,
                     const TransportOptions& opts) {
  if (size < 1) throw ValidationError("w2_observer: cloud size must be >= 1");
  if (mode == TransportMode::Exact && size > kExactTransportLimit)
    throw ResourceError("w2_observer: exact mode is limited to " +
                        std::to_string(kExactTransportLimit) + " points");
  auto reference = std::make_shared<std::vector<double>>();
  return [=](const EnsembleSnapshot& snap, MixingRow& row, MixingCurve&) {
    if (snap.walkers() < size)
      throw ValidationError("w2_observer: ensemble has fewer walkers than the W2 cloud size");
    if (reference->empty())
      *reference = uniform_cloud(snap.n, size, seed, std::uint64_t{1} << 63);
    const PointSet a{std::span(snap.points).first(size * snap.n), snap.n};
    const PointSet b{*reference, snap.n};
    row.w2 = wasserstein_estimate(a, b, mode, opts).w2();
  };
}

}  // namespace kwl::metrics
