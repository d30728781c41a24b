#pragma once

#include <cmath>
#include <cstdint>

namespace nngauge {

// Identifier recorded in every report so results can be traced to the exact
// seed-splitting scheme.
inline constexpr const char* kRngMixerId = "splitmix64-golden-xor-v1";

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

// Replica k gets the stream seeded with base XOR golden-ratio-mix(k).
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t k) {
  return base ^ mix64((k + 1) * kGoldenGamma);
}

// Counter-based stream: output i is a hash of (seed, i). Streams with
// different seeds are independent for Monte Carlo purposes and a stream is
// fully determined by its seed, independent of call batching.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Uniform on (0,1), never exactly 0 or 1.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  // Standard normal via Box-Muller, pairs cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nngauge
