#include "kwl/sphere.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "kwl/errors.hpp"

namespace kwl {

double squared_norm(std::span<const double> x) noexcept {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

void renormalize(std::span<double> x) noexcept {
  const double inv = 1.0 / std::sqrt(squared_norm(x));
  for (double& v : x) v *= inv;
}

SpherePoint::SpherePoint(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.size() < 2) throw ValidationError("SpherePoint: dimension must be >= 2");
  const double s = squared_norm(coords_);
  if (!(std::abs(s - 1.0) <= 1e-12))
    throw ValidationError("SpherePoint: |x|^2 = " + std::to_string(s) + " is not 1");
}

SpherePoint SpherePoint::normalized(std::vector<double> coords) {
  if (coords.size() < 2) throw ValidationError("SpherePoint: dimension must be >= 2");
  const double s = squared_norm(coords);
  if (!(s > 0.0) || !std::isfinite(s))
    throw ValidationError("SpherePoint: cannot normalize zero or non-finite vector");
  renormalize(coords);
  return SpherePoint(std::move(coords), Unchecked{});
}

SpherePoint SpherePoint::basis(std::size_t n, std::size_t axis) {
  if (axis >= n) throw ValidationError("SpherePoint::basis: axis out of range");
  std::vector<double> c(n, 0.0);
  c[axis] = 1.0;
  return SpherePoint(std::move(c));
}

RotationEvent::RotationEvent(std::size_t a, std::size_t b, double angle) {
  if (a == b) throw ValidationError("RotationEvent: plane needs two distinct axes");
  if (!std::isfinite(angle)) throw ValidationError("RotationEvent: non-finite angle");
  if (a < b) {
    i = a;
    j = b;
    theta = angle;
  } else {
    i = b;
    j = a;
    theta = -angle;
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  theta = std::fmod(theta, two_pi);
  if (theta < 0.0) theta += two_pi;
}

SpherePoint rotate(const SpherePoint& x, const RotationEvent& ev) {
  if (ev.i >= x.dim() || ev.j >= x.dim() || ev.i == ev.j)
    throw ValidationError("rotate: plane index out of range");
  if (!std::isfinite(ev.theta)) throw ValidationError("rotate: non-finite angle");
  std::vector<double> out(x.coords_);
  if (ev.theta != 0.0) rotate_in_place(out, ev.i, ev.j, std::cos(ev.theta), std::sin(ev.theta));
  return SpherePoint(std::move(out), SpherePoint::Unchecked{});
}

void sample_uniform_sphere_into(std::span<double> out, RandomStream& rng) {
  std::normal_distribution<double> gauss;
  double s = 0.0;
  do {
    s = 0.0;
    for (double& v : out) {
      v = gauss(rng);
      s += v * v;
    }
  } while (!(s > 0.0));
  const double inv = 1.0 / std::sqrt(s);
  for (double& v : out) v *= inv;
}

SpherePoint sample_uniform_sphere(std::size_t n, RandomStream& rng) {
  if (n < 2) throw ValidationError("sample_uniform_sphere: n must be >= 2");
  std::vector<double> c(n);
  sample_uniform_sphere_into(c, rng);
  return SpherePoint(std::move(c));
}

PairTable::PairTable(std::size_t n) : n_(n) {
  if (n < 2) throw ValidationError("PairTable: n must be >= 2");
  pairs_.reserve(pair_count(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      pairs_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
}

std::size_t PairTable::index_of(std::size_t i, std::size_t j) const {
  if (i == j || i >= n_ || j >= n_) throw ValidationError("PairTable: invalid pair");
  if (i > j) std::swap(i, j);
  // rows 0..i-1 contribute (n-1) + (n-2) + ... + (n-i) entries
  return i * (2 * n_ - i - 1) / 2 + (j - i - 1);
}

DrawnEvent draw_event_raw(std::uint64_t pairs, RandomStream& rng) noexcept {
  auto block = rng.next_block();
  unsigned __int128 m = static_cast<unsigned __int128>(block[0]) * pairs;
  if (static_cast<std::uint64_t>(m) < pairs) {
    const std::uint64_t threshold = (0 - pairs) % pairs;
    while (static_cast<std::uint64_t>(m) < threshold) {
      block = rng.next_block();
      m = static_cast<unsigned __int128>(block[0]) * pairs;
    }
  }
  return {static_cast<std::uint64_t>(m >> 64),
          2.0 * std::numbers::pi * RandomStream::to_unit(block[1])};
}

RotationEvent draw_rotation_event(std::size_t n, RandomStream& rng, std::uint64_t* pair_index) {
  if (n < 2) throw ValidationError("draw_rotation_event: n must be >= 2");
  const auto ev = draw_event_raw(pair_count(n), rng);
  if (pair_index != nullptr) *pair_index = ev.pair;
  // invert the row-major enumeration
  std::size_t i = 0;
  std::uint64_t p = ev.pair;
  while (p >= n - 1 - i) {
    p -= n - 1 - i;
    ++i;
  }
  RotationEvent out;
  out.i = i;
  out.j = i + 1 + static_cast<std::size_t>(p);
  out.theta = ev.theta;
  return out;
}

}  // namespace kwl
