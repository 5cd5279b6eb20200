#include "kwl/density_lab.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "kwl/errors.hpp"

namespace kwl::density {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Stencil {
  std::array<std::size_t, 4> idx;
  std::array<double, 4> w;
};

constexpr std::array<std::array<int, 2>, 3> kPlanes{{{0, 1}, {0, 2}, {1, 2}}};

struct ThetaTable {
  std::array<double, kThetaNodes> c, s;
  ThetaTable() {
    for (std::size_t t = 0; t < kThetaNodes; ++t) {
      const double theta = kTwoPi * static_cast<double>(t) / static_cast<double>(kThetaNodes);
      c[t] = std::cos(theta);
      s[t] = std::sin(theta);
    }
  }
};

const ThetaTable& theta_table() {
  static const ThetaTable table;
  return table;
}

Stencil stencil_at(const SphereGrid& grid, const Vec3& p) {
  const std::size_t nb = grid.bands();
  const std::size_t ns = grid.sectors();
  const double z = std::clamp(p[2], -1.0, 1.0);
  double phi = std::atan2(p[1], p[0]);
  if (phi < 0.0) phi += kTwoPi;
  const double fz = (z + 1.0) / grid.dz() - 0.5;
  const double fp = phi / grid.dphi() - 0.5;
  if (!std::isfinite(fz) || !std::isfinite(fp))
    throw std::logic_error("SphereGrid: interpolation point out of range");

  std::size_t i0, i1;
  double tz;
  if (fz <= 0.0) {
    i0 = i1 = 0;
    tz = 0.0;
  } else if (fz >= static_cast<double>(nb - 1)) {
    i0 = i1 = nb - 1;
    tz = 0.0;
  } else {
    const double fl = std::floor(fz);
    i0 = static_cast<std::size_t>(fl);
    i1 = i0 + 1;
    tz = fz - fl;
  }
  const double fl = std::floor(fp);
  const double tp = fp - fl;
  const auto base = static_cast<std::int64_t>(fl);
  const auto wrap = [ns](std::int64_t j) {
    const auto m = static_cast<std::int64_t>(ns);
    return static_cast<std::size_t>(((j % m) + m) % m);
  };
  const std::size_t j0 = wrap(base);
  const std::size_t j1 = wrap(base + 1);
  return {{i0 * ns + j0, i0 * ns + j1, i1 * ns + j0, i1 * ns + j1},
          {(1.0 - tz) * (1.0 - tp), (1.0 - tz) * tp, tz * (1.0 - tp), tz * tp}};
}

// Accumulates the 3 x 64 rotation average at one cell for every field.
void apply_cell(const SphereGrid& grid, std::size_t cell,
                std::span<const std::vector<double>> fields, std::span<double> acc) {
  const auto& tt = theta_table();
  const Vec3 p = grid.center(cell);
  std::fill(acc.begin(), acc.end(), 0.0);
  for (const auto& plane : kPlanes) {
    const int a = plane[0];
    const int b = plane[1];
    for (std::size_t t = 0; t < kThetaNodes; ++t) {
      Vec3 q = p;
      q[a] = tt.c[t] * p[a] - tt.s[t] * p[b];
      q[b] = tt.s[t] * p[a] + tt.c[t] * p[b];
      const Stencil st = stencil_at(grid, q);
      for (std::size_t f = 0; f < fields.size(); ++f) {
        const auto& v = fields[f];
        acc[f] += st.w[0] * v[st.idx[0]] + st.w[1] * v[st.idx[1]] + st.w[2] * v[st.idx[2]] +
                  st.w[3] * v[st.idx[3]];
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(kPlanes.size() * kThetaNodes);
  for (double& x : acc) x *= scale;
}

}  // namespace

SphereGrid::SphereGrid(std::size_t bands, std::size_t sectors) : bands_(bands), sectors_(sectors) {
  if (bands < 2 || sectors < 3) throw ValidationError("SphereGrid: need >= 2 bands and >= 3 sectors");
  centers_.resize(bands * sectors);
  for (std::size_t i = 0; i < bands; ++i) {
    const double z = -1.0 + (static_cast<double>(i) + 0.5) * dz();
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    for (std::size_t j = 0; j < sectors; ++j) {
      const double phi = (static_cast<double>(j) + 0.5) * dphi();
      centers_[i * sectors + j] = {rho * std::cos(phi), rho * std::sin(phi), z};
    }
  }
}

SphereGrid SphereGrid::with_cells(std::size_t cells) {
  if (cells < 6) throw ValidationError("SphereGrid: need at least 6 cells");
  const auto bands = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(cells) / std::numbers::pi))));
  const auto sectors = std::max<std::size_t>(
      3, static_cast<std::size_t>(std::lround(static_cast<double>(cells) / static_cast<double>(bands))));
  return SphereGrid(bands, sectors);
}

double SphereGrid::dphi() const noexcept { return kTwoPi / static_cast<double>(sectors_); }

Vec3 SphereGrid::center(std::size_t cell) const { return centers_[cell]; }

double SphereGrid::interpolate(std::span<const double> values, const Vec3& p) const {
  if (values.size() != size()) throw ValidationError("SphereGrid::interpolate: size mismatch");
  const Stencil st = stencil_at(*this, p);
  return st.w[0] * values[st.idx[0]] + st.w[1] * values[st.idx[1]] + st.w[2] * values[st.idx[2]] +
         st.w[3] * values[st.idx[3]];
}

double GridDensity::mass() const {
  // equal weights: sum first, then scale
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid->weight();
}

double GridDensity::sup() const { return *std::max_element(values.begin(), values.end()); }
double GridDensity::min() const { return *std::min_element(values.begin(), values.end()); }

GridDensity uniform_density(std::shared_ptr<const SphereGrid> grid) {
  GridDensity g{grid, std::vector<double>(grid->size(), 1.0)};
  return g;
}

GridDensity cap_density(std::shared_ptr<const SphereGrid> grid, const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw ValidationError("cap_density: radius must be positive");
  const double norm = std::sqrt(center[0] * center[0] + center[1] * center[1] + center[2] * center[2]);
  if (!(norm > 0.0)) throw ValidationError("cap_density: zero center");
  const double cos_r = radius >= std::numbers::pi ? -2.0 : std::cos(radius);
  GridDensity g{grid, std::vector<double>(grid->size(), 0.0)};
  std::size_t inside = 0;
  for (std::size_t c = 0; c < grid->size(); ++c) {
    const Vec3 p = grid->center(c);
    const double dot = (p[0] * center[0] + p[1] * center[1] + p[2] * center[2]) / norm;
    if (dot >= cos_r) {
      g.values[c] = 1.0;
      ++inside;
    }
  }
  if (inside == 0) throw ValidationError("cap_density: cap contains no cell center; refine the grid");
  const double scale = static_cast<double>(grid->size()) / static_cast<double>(inside);
  for (double& v : g.values) v *= scale;
  return g;
}

std::vector<std::vector<double>> kernel_apply_raw(const SphereGrid& grid,
                                                  std::span<const std::vector<double>> fields,
                                                  Execution exec) {
  for (const auto& f : fields)
    if (f.size() != grid.size()) throw ValidationError("kernel_apply_raw: field size mismatch");
  const std::size_t nf = fields.size();
  std::vector<std::vector<double>> out(nf, std::vector<double>(grid.size()));
  const auto cells = static_cast<std::int64_t>(grid.size());
  if (exec == Execution::Serial) {
    std::vector<double> acc(nf);
    for (std::int64_t c = 0; c < cells; ++c) {
      apply_cell(grid, static_cast<std::size_t>(c), fields, acc);
      for (std::size_t f = 0; f < nf; ++f) out[f][c] = acc[f];
    }
    return out;
  }
#pragma omp parallel
  {
    std::vector<double> acc(nf);
#pragma omp for schedule(static)
    for (std::int64_t c = 0; c < cells; ++c) {
      apply_cell(grid, static_cast<std::size_t>(c), fields, acc);
      for (std::size_t f = 0; f < nf; ++f) out[f][c] = acc[f];
    }
  }
  return out;
}

std::vector<double> kernel_apply_raw(const SphereGrid& grid, std::span<const double> f,
                                     Execution exec) {
  const std::vector<std::vector<double>> one{std::vector<double>(f.begin(), f.end())};
  return std::move(kernel_apply_raw(grid, one, exec).front());
}

KernelResult kernel_apply_grid(const GridDensity& g, Execution exec) {
  if (!g.grid || g.values.size() != g.grid->size())
    throw ValidationError("kernel_apply_grid: density does not match its grid");
  KernelResult r;
  r.density.grid = g.grid;
  r.density.values = kernel_apply_raw(*g.grid, g.values, exec);
  r.raw_mass = r.density.mass();
  r.renorm_factor = 1.0 / r.raw_mass;
  for (double& v : r.density.values) v *= r.renorm_factor;
  return r;
}

std::vector<TracePoint> sup_density_trace(
    const GridDensity& g0, std::size_t steps, double max_drift,
    const std::function<void(std::uint64_t, const GridDensity&)>& on_step) {
  if (steps > kMaxTraceSteps)
    throw ValidationError("sup_density_trace: at most " + std::to_string(kMaxTraceSteps) +
                          " steps (grid diffusion dominates beyond)");
  std::vector<TracePoint> trace;
  trace.push_back({0, g0.sup(), g0.min(), 1.0});
  if (on_step) on_step(0, g0);
  GridDensity g = g0;
  for (std::size_t k = 1; k <= steps; ++k) {
    KernelResult r = kernel_apply_grid(g);
    if (!(std::abs(r.renorm_factor - 1.0) <= max_drift))
      throw ResourceError(fmt::format(
          "sup_density_trace: renormalization factor {:.6g} at step {} drifts beyond {:g}; the grid "
          "({} x {} cells) is too coarse for this density",
          r.renorm_factor, k, max_drift, g.grid->bands(), g.grid->sectors()));
    g = std::move(r.density);
    trace.push_back({k, g.sup(), g.min(), r.renorm_factor});
    if (on_step) on_step(k, g);
  }
  return trace;
}

double pushforward_density_at(const CircleDensity& h, const Vec3& y) {
  const double r = std::hypot(y[1], y[2]);
  if (!(r > 0.0)) return std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (const double sign : {1.0, -1.0}) {
    const double phi = std::atan2(sign * r, y[0]);
    const double theta = std::atan2(sign * y[2], sign * y[1]);
    // F(phi, theta) = (cos phi, sin phi cos theta, sin phi sin theta)
    const Vec3 d_phi{-std::sin(phi), std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta)};
    const Vec3 d_theta{0.0, -std::sin(phi) * std::sin(theta), std::sin(phi) * std::cos(theta)};
    const Vec3 cross{d_phi[1] * d_theta[2] - d_phi[2] * d_theta[1],
                     d_phi[2] * d_theta[0] - d_phi[0] * d_theta[2],
                     d_phi[0] * d_theta[1] - d_phi[1] * d_theta[0]};
    const double jac = std::sqrt(cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]);
    // source measure h dphi/(2 pi) dtheta/(2 pi); U_2 is area / (4 pi)
    total += h(phi) / (kTwoPi * kTwoPi) / jac * (4.0 * std::numbers::pi);
  }
  return total;
}

PushforwardResult circle_average_pushforward(std::shared_ptr<const SphereGrid> grid,
                                             const CircleDensity& h, double min_r2) {
  constexpr std::size_t nodes = 4096;
  double mass = 0.0;
  for (std::size_t t = 0; t < nodes; ++t) {
    const double v = h(kTwoPi * static_cast<double>(t) / nodes);
    if (!(v >= 0.0)) throw ValidationError("circle_average_pushforward: h must be nonnegative");
    mass += v;
  }
  mass /= nodes;
  if (!(std::abs(mass - 1.0) <= 1e-6))
    throw ValidationError(fmt::format(
        "circle_average_pushforward: h is not normalized w.r.t. U_1 (mass {:.9g})", mass));

  PushforwardResult out;
  out.reference_prefactor = 1.0 / kTwoPi;
  out.density.grid = grid;
  out.density.values.resize(grid->size());
  std::vector<double> ratios;
  for (std::size_t c = 0; c < grid->size(); ++c) {
    const Vec3 y = grid->center(c);
    const double value = pushforward_density_at(h, y);
    out.density.values[c] = value;
    const double r2 = y[1] * y[1] + y[2] * y[2];
    if (r2 < min_r2) continue;
    const double r = std::sqrt(r2);
    const double phi = std::atan2(r, y[0]);
    const double shape = 0.5 * (h(phi) + h(-phi)) / r;
    if (shape > 1e-300) ratios.push_back(value / shape);
  }
  out.grid_mass = out.density.mass();
  out.admissible_cells = ratios.size();
  if (ratios.empty())
    throw ValidationError("circle_average_pushforward: no admissible cells; refine the grid");
  std::vector<double> sorted = ratios;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  out.measured_constant = sorted[sorted.size() / 2];
  out.max_relative_deviation = 0.0;
  for (double q : ratios)
    out.max_relative_deviation =
        std::max(out.max_relative_deviation, std::abs(q / out.measured_constant - 1.0));
  return out;
}

LemmaCheckRecord technical_lemma_check(const LemmaParams& p) {
  const auto in_unit = [](double x) { return x > 0.0 && x <= 1.0; };
  if (!in_unit(p.x1) || !in_unit(p.x2) || !in_unit(p.xs) || !in_unit(p.xt))
    throw ValidationError("technical_lemma_check: x1, x2, xs, xt must lie in (0, 1]");
  if (p.x1 + p.x2 > 1.0)
    throw ValidationError("technical_lemma_check: x1 + x2 must not exceed 1");
  if (p.j < 1 || p.j > 12) throw ValidationError("technical_lemma_check: j must lie in 1..12");

  const double a = p.x1 + p.x2;
  const double u0 = -std::log(a);
  const int jm1 = p.j - 1;
  // theta = e^{-u} / a, d theta = -e^{-u} / a du
  const auto integrand = [&](double u) {
    if (!std::isfinite(u)) return 0.0;
    const double e = std::exp(-u);
    const double poly = jm1 == 0 ? 1.0 : std::pow(u, jm1);
    return poly * e / (a * (e + p.xs) * (e + p.xt));
  };

  std::vector<double> breaks{u0};
  for (double x : {p.xs, p.xt}) {
    const double b = -std::log(x);
    if (b > u0) breaks.push_back(b);
  }
  breaks.push_back(std::max(u0, static_cast<double>(jm1)) + 1.0);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double lhs = 0.0, err = 0.0;
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    double e = 0.0;
    lhs += GK::integrate(integrand, breaks[s], breaks[s + 1], 20, 1e-12, &e);
    err += e;
  }
  double tail_err = 0.0;
  lhs += GK::integrate(integrand, breaks.back(), std::numeric_limits<double>::infinity(), 20,
                       1e-12, &tail_err);
  err += tail_err;
  if (!(err <= 1e-6 * std::abs(lhs)))
    throw ResourceError(fmt::format(
        "technical_lemma_check: quadrature did not converge (estimate {:.3g}, error {:.3g})", lhs, err));

  // rhs, in log space above j = 8
  double rhs;
  const std::array<double, 4> xs{p.x1, p.x2, p.xs, p.xt};
  if (p.j <= 8) {
    double sum = 0.0;
    for (double x : xs) sum += std::pow(-std::log(x), p.j);
    rhs = 4.0 * std::tgamma(p.j + 2.0) / ((p.xs + p.xt) * a) * sum;
  } else {
    double top = -std::numeric_limits<double>::infinity();
    std::array<double, 4> logs{};
    for (std::size_t i = 0; i < 4; ++i) {
      const double l = -std::log(xs[i]);
      logs[i] = l > 0.0 ? p.j * std::log(l) : -std::numeric_limits<double>::infinity();
      top = std::max(top, logs[i]);
    }
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - top);
    const double log_rhs = std::log(4.0) + std::lgamma(p.j + 2.0) - std::log(p.xs + p.xt) -
                           std::log(a) + top + std::log(acc);
    rhs = std::exp(log_rhs);
  }
  return {p, lhs, err, rhs, lhs <= rhs};
}

void write_csv(std::ostream& out, const GridDensity& g) {
  out << "cell,x,y,z,weight,value\n";
  const double w = g.grid->weight();
  for (std::size_t c = 0; c < g.grid->size(); ++c) {
    const Vec3 p = g.grid->center(c);
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", c, p[0], p[1], p[2], w,
                       g.values[c]);
  }
}

std::vector<CellRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "cell,x,y,z,weight,value")
    throw ValidationError("read_csv: missing header 'cell,x,y,z,weight,value'");
  std::vector<CellRecord> cells;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    CellRecord r{};
    char c1, c2, c3, c4, c5;
    if (!(row >> r.cell >> c1 >> r.x >> c2 >> r.y >> c3 >> r.z >> c4 >> r.weight >> c5 >> r.value) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',')
      throw ValidationError("read_csv: malformed row at line " + std::to_string(lineno));
    cells.push_back(r);
  }
  return cells;
}

}  // namespace kwl::density
