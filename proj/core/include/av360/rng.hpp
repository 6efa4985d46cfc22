#pragma once

#include <cstdint>
#include <string_view>

namespace av360 {

// Deterministic RNG used everywhere randomness is needed. All sampling is
// implemented on top of raw 64-bit draws so results are identical across
// platforms and standard-library versions. Sub-streams are derived from one
// root seed via derive(root, tag); the derivation is splitmix64 over the
// root seed xor FNV-1a(tag).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    // multiply-shift; bias is negligible for n << 2^64 and keeps draws O(1)
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // standard normal via Box-Muller (both draws consumed every call)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return box_muller(u1, u2);
  }

  // normal(0, std) truncated to [-2*std, 2*std]
  double truncated_normal(double std_dev) {
    for (;;) {
      double z = normal();
      if (z >= -2.0 && z <= 2.0) return z * std_dev;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static double box_muller(double u1, double u2);
  std::uint64_t state_;
};

std::uint64_t fnv1a64(std::string_view s);

// Sub-seed for a named stream of a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);

}  // namespace av360
