#pragma once

#include <array>
#include <cstdint>

namespace onestate {

/// Philox4x64-10 block function. Pure: the same (counter, key) always yields the same
/// 256 output bits.
std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> counter,
                                        std::array<std::uint64_t, 2> key);

/// Standard normal variates addressed by (seed, stream, index).
///
/// Each variate consumes one Philox block with counter (index, stream, 0, 0)
/// and key (seed, 0x6f6e657374617465). The first two output words are mapped
/// to u1 in (0, 1] and u2 in [0, 1) with 53-bit resolution, and the variate
/// is sqrt(-2 ln u1) cos(2 pi u2).
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  double operator()(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace onestate
