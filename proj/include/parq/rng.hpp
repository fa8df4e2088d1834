#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace parq {

// Philox 4x32-10 counter-based generator. The block function is a pure map
// from (counter, key) to 128 output bits, so any stream position can be
// reproduced on any platform without replaying the sequence.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr std::array<std::uint32_t, 4> block(
      std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

// Identifies a reproducible random stream: the same (seed, stream) pair
// yields the same sequence everywhere.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// Sequential convenience wrapper. The seed becomes the Philox key, the stream
// id occupies the upper counter words, and draws advance a 64-bit counter.
class PhiloxRng {
 public:
  explicit PhiloxRng(RngSpec spec)
      : key_{std::uint32_t(spec.seed), std::uint32_t(spec.seed >> 32)},
        ctr_{0, 0, std::uint32_t(spec.stream), std::uint32_t(spec.stream >> 32)} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[std::size_t(pos_++)];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the paired variate is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1], keeps the log finite
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  void refill() {
    buf_ = Philox4x32::block(ctr_, key_);
    pos_ = 0;
    if (++ctr_[0] == 0) ++ctr_[1];
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stateless mix of (seed, n). Gives every optimization step its own sample
// seed without shared mutable state between steps or workers.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t n) {
  const auto out = Philox4x32::block(
      {std::uint32_t(n), std::uint32_t(n >> 32), 0x243f6a88u, 0x85a308d3u},
      {std::uint32_t(seed), std::uint32_t(seed >> 32)});
  return (std::uint64_t(out[1]) << 32) | out[0];
}

}  // namespace parq
