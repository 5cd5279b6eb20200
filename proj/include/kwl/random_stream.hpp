#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace kwl {

/// Philox4x32-10 block function (Salmon et al., SC'11). Maps a 128-bit
/// counter and a 64-bit key to 128 pseudo-random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based random stream. The pair (master_seed, stream_id) selects an
/// independent sequence; `counter` is the index of the next 128-bit block.
/// A stream is a value: copying it forks an identical sequence.
///
/// Satisfies UniformRandomBitGenerator so it can drive <random> distributions.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream() = default;
  RandomStream(std::uint64_t master_seed, std::uint64_t stream_id,
               std::uint64_t counter = 0) noexcept
      : seed_(master_seed), stream_(stream_id), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Next full 128-bit block; discards any half-consumed block.
  std::array<std::uint64_t, 2> next_block() noexcept;

  result_type operator()() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return to_unit((*this)()); }

  /// Uniform integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept;

  static double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  bool operator==(const RandomStream&) const = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace kwl
