#include "av360/rng.hpp"

#include <cmath>

namespace av360 {

double Rng::box_muller(double u1, double u2) {
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  Rng mix(root ^ fnv1a64(tag));
  return mix.next_u64();
}

}  // namespace av360
