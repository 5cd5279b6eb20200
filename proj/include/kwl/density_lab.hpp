#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "kwl/execution.hpp"

namespace kwl::density {

using Vec3 = std::array<double, 3>;

/// Equal-area latitude-band grid on S^2: `bands` equal steps in z = cos(polar
/// angle) times `sectors` equal steps in azimuth. Every cell has area
/// 4 pi / (bands * sectors), so the quadrature weights are uniform.
class SphereGrid {
 public:
  SphereGrid(std::size_t bands, std::size_t sectors);

  /// Near-square cells at the equator (sectors ~ pi * bands), about `cells` total.
  static SphereGrid with_cells(std::size_t cells);

  std::size_t bands() const noexcept { return bands_; }
  std::size_t sectors() const noexcept { return sectors_; }
  std::size_t size() const noexcept { return bands_ * sectors_; }
  double weight() const noexcept { return 1.0 / static_cast<double>(size()); }

  Vec3 center(std::size_t cell) const;

  /// Bilinear interpolation in (z, azimuth), periodic in azimuth and clamped to
  /// the outermost band centers in z.
  double interpolate(std::span<const double> values, const Vec3& p) const;

  /// Grid resolution in the (z, azimuth) parameterization.
  double dz() const noexcept { return 2.0 / static_cast<double>(bands_); }
  double dphi() const noexcept;

 private:
  std::size_t bands_;
  std::size_t sectors_;
  std::vector<Vec3> centers_;
};

/// Density with respect to the uniform measure U_2, sampled at cell centers.
struct GridDensity {
  std::shared_ptr<const SphereGrid> grid;
  std::vector<double> values;

  double mass() const;  // sum of weight * value
  double sup() const;
  double min() const;
};

GridDensity uniform_density(std::shared_ptr<const SphereGrid> grid);

/// Normalized indicator of the geodesic cap {x : angle(x, center) <= radius}.
GridDensity cap_density(std::shared_ptr<const SphereGrid> grid, const Vec3& center, double radius);

/// Kernel as an operator on functions: (Kf)(x) = (1/3) sum over the three
/// coordinate planes of the 64-point trapezoid average of f(R(i,j;theta) x).
/// No renormalization. Each entry of `fields` is one function on the grid.
std::vector<std::vector<double>> kernel_apply_raw(const SphereGrid& grid,
                                                  std::span<const std::vector<double>> fields,
                                                  Execution exec = Execution::Parallel);
std::vector<double> kernel_apply_raw(const SphereGrid& grid, std::span<const double> f,
                                     Execution exec = Execution::Parallel);

inline constexpr std::size_t kThetaNodes = 64;

struct KernelResult {
  GridDensity density;    // renormalized to unit mass
  double raw_mass;        // mass before renormalization
  double renorm_factor;   // 1 / raw_mass
};

/// One step of the walk applied to a density (the kernel is symmetric, so the
/// density update is the same circle average).
KernelResult kernel_apply_grid(const GridDensity& g, Execution exec = Execution::Parallel);

struct TracePoint {
  std::uint64_t k;
  double sup;
  double min;
  double renorm_factor;
};

/// Iterates kernel_apply_grid, recording sup/min of the density. Aborts with a
/// ResourceError when a renormalization factor leaves 1 +- max_drift.
/// `on_step` (optional) sees the density after each step, including k = 0.
std::vector<TracePoint> sup_density_trace(
    const GridDensity& g0, std::size_t steps, double max_drift = 1e-3,
    const std::function<void(std::uint64_t, const GridDensity&)>& on_step = {});

inline constexpr std::size_t kMaxTraceSteps = 200;

/// Density on S^1 with respect to U_1, as a function of the angle.
using CircleDensity = std::function<double(double)>;

/// Exact density w.r.t. U_2 of the image of h (on the great circle x_3 = 0,
/// angle measured from e_1 toward e_2) under a uniform rotation in the
/// (x_2, x_3) plane, by summing h / |Jacobian| over both preimages.
double pushforward_density_at(const CircleDensity& h, const Vec3& y);

struct PushforwardResult {
  GridDensity density;
  double grid_mass;           // quadrature mass; the density is singular at +-e_1
  double measured_constant;   // median of density / (r^{-1} h_sym(x_1, r)), r^2 = x_2^2 + x_3^2
  double max_relative_deviation;
  std::size_t admissible_cells;
  double reference_prefactor;  // 1 / (2 pi)
};

/// Checks the pushforward against r^{-1} h(x_1, r) on cells with r^2 >= min_r2.
/// h_sym averages h over the two preimage angles +-phi.
PushforwardResult circle_average_pushforward(std::shared_ptr<const SphereGrid> grid,
                                             const CircleDensity& h, double min_r2 = 1e-3);

struct LemmaParams {
  double x1, x2, xs, xt;
  int j;
};

struct LemmaCheckRecord {
  LemmaParams params;
  double lhs;
  double lhs_error;  // absolute quadrature error estimate
  double rhs;
  bool holds;
};

/// int_0^1 ((x1+x2)t + xs)^{-1} ((x1+x2)t + xt)^{-1} (-ln((x1+x2)t))^{j-1} dt against
/// 4 (j+1)! (xs+xt)^{-1} (x1+x2)^{-1} [sum of (-ln x)^j over x1, x2, xs, xt].
/// The integral is taken after substituting u = -ln((x1+x2)t).
LemmaCheckRecord technical_lemma_check(const LemmaParams& p);

struct CellRecord {
  std::size_t cell;
  double x, y, z, weight, value;
};

/// CSV with header "cell,x,y,z,weight,value" and 17 significant digits.
void write_csv(std::ostream& out, const GridDensity& g);
std::vector<CellRecord> read_csv(std::istream& in);

}  // namespace kwl::density
