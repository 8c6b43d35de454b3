#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <array>

namespace imupose {

// Deterministic xoshiro256** generator, seeded through splitmix64.
// The integer and uniform streams are exact IEEE-754 arithmetic and thus
// reproduce bit-for-bit for a given seed; normal draws go through libm
// (log/cos) and reproduce bit-for-bit per platform + libm build.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
    has_cached_normal_ = false;
    cached_normal_ = 0.0;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection.
  uint64_t uniform_index(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; draws come in deterministic pairs.
  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
  }

  // Independent child stream; used to give sequences/batch items their own
  // deterministic generators regardless of evaluation order.
  Rng derive(uint64_t stream) const {
    uint64_t x = state_[0] ^ rotl(state_[2], 23) ^ (stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    Rng child(0);
    for (auto& s : child.state_) s = splitmix64(x);
    child.has_cached_normal_ = false;
    return child;
  }

  std::array<uint64_t, 6> serialize() const {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(cached_normal_));
    std::memcpy(&bits, &cached_normal_, sizeof(bits));
    return {state_[0], state_[1], state_[2], state_[3], has_cached_normal_ ? 1ULL : 0ULL, bits};
  }

  void deserialize(const std::array<uint64_t, 6>& s) {
    state_ = {s[0], s[1], s[2], s[3]};
    has_cached_normal_ = s[4] != 0;
    std::memcpy(&cached_normal_, &s[5], sizeof(cached_normal_));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::array<uint64_t, 4> state_{};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace imupose
