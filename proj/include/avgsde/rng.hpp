#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace avgsde::rng {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Key of the substream identified by (seed, a, b, c). Distinct tuples give
/// statistically independent keys.
constexpr std::uint64_t substream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                      std::uint64_t c) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ (a * 0xd1b54a32d192ed03ULL));
  k = mix64(k ^ (b * 0xaef17502108ef2d9ULL));
  k = mix64(k ^ (c * 0xf58e3f2a7bb4c1d7ULL));
  return k;
}

/// Uniform on the open interval (0, 1).
constexpr double to_unit(std::uint64_t u) {
  return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
}

/// Stateless-by-key Gaussian generator: the n-th normal of a substream only
/// depends on (key, n). Box-Muller on consecutive counter pairs.
class CounterNormal {
 public:
  explicit constexpr CounterNormal(std::uint64_t key) : key_(key) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = to_unit(mix64(key_ ^ (2 * counter_)));
    const double u2 = to_unit(mix64(key_ ^ (2 * counter_ + 1)));
    ++counter_;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double uniform() { return to_unit(mix64(key_ ^ (0x8000000000000000ULL | counter_++))); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace avgsde::rng
