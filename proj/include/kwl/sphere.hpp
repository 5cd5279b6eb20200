#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kwl/random_stream.hpp"

namespace kwl {

struct RotationEvent;
class SpherePoint;
SpherePoint rotate(const SpherePoint& x, const RotationEvent& ev);

/// Unit vector in R^n, n >= 2.
class SpherePoint {
 public:
  /// Validates |sum x_i^2 - 1| <= 1e-12.
  explicit SpherePoint(std::vector<double> coords);

  /// Projects an arbitrary nonzero vector onto the sphere.
  static SpherePoint normalized(std::vector<double> coords);

  /// Standard basis vector e_{axis} (0-based axis).
  static SpherePoint basis(std::size_t n, std::size_t axis);

  std::size_t dim() const noexcept { return coords_.size(); }
  std::span<const double> coords() const noexcept { return coords_; }
  double operator[](std::size_t i) const { return coords_[i]; }

  bool operator==(const SpherePoint&) const = default;

 private:
  struct Unchecked {};
  SpherePoint(std::vector<double> coords, Unchecked) : coords_(std::move(coords)) {}

  std::vector<double> coords_;

  friend SpherePoint rotate(const SpherePoint&, const RotationEvent&);
};

/// Rotation by `theta` in the oriented (i, j) coordinate plane. Indices are
/// 0-based and stored with i < j.
struct RotationEvent {
  std::size_t i = 0;
  std::size_t j = 1;
  double theta = 0.0;

  RotationEvent() = default;
  /// Canonicalizes the pair order; swapping the axes negates the angle.
  RotationEvent(std::size_t a, std::size_t b, double angle);
};

/// x_i' = x_i cos(theta) - x_j sin(theta), x_j' = x_i sin(theta) + x_j cos(theta).
SpherePoint rotate(const SpherePoint& x, const RotationEvent& ev);

/// Raw Givens kernel on a coordinate buffer; no validation.
inline void rotate_in_place(std::span<double> x, std::size_t i, std::size_t j,
                            double c, double s) noexcept {
  const double xi = x[i];
  const double xj = x[j];
  x[i] = c * xi - s * xj;
  x[j] = s * xi + c * xj;
}

/// Rescales to unit norm in place.
void renormalize(std::span<double> x) noexcept;

double squared_norm(std::span<const double> x) noexcept;

/// Normalized standard Gaussian vector; the zero vector is rejected.
SpherePoint sample_uniform_sphere(std::size_t n, RandomStream& rng);

/// Fills `out` with a uniform point on S^{out.size()-1}.
void sample_uniform_sphere_into(std::span<double> out, RandomStream& rng);

inline std::uint64_t pair_count(std::size_t n) noexcept {
  return static_cast<std::uint64_t>(n) * (n - 1) / 2;
}

/// Canonical row-major enumeration of unordered pairs i < j:
/// (0,1), (0,2), ..., (0,n-1), (1,2), ...
class PairTable {
 public:
  struct Pair {
    std::uint32_t i;
    std::uint32_t j;
  };

  explicit PairTable(std::size_t n);

  std::size_t dim() const noexcept { return n_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  Pair operator[](std::size_t index) const { return pairs_[index]; }

  /// Inverse map, i != j in either order.
  std::size_t index_of(std::size_t i, std::size_t j) const;

 private:
  std::size_t n_;
  std::vector<Pair> pairs_;
};

/// Draws one 128-bit block: pair uniform over C(n,2), angle uniform on [0, 2pi).
/// Returns the canonical pair index through `pair_index` when non-null.
RotationEvent draw_rotation_event(std::size_t n, RandomStream& rng,
                                  std::uint64_t* pair_index = nullptr);

/// Pair index and angle from one block; shared by the walk kernel.
struct DrawnEvent {
  std::uint64_t pair;
  double theta;
};
DrawnEvent draw_event_raw(std::uint64_t pairs, RandomStream& rng) noexcept;

}  // namespace kwl
