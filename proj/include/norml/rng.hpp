#pragma once

#include <cstdint>
#include <random>

namespace norml {

// Seedable generator with counter-based splitting: a child stream depends
// only on the parent seed and the key, never on how much the parent has been
// consumed or on scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  Rng split(std::uint64_t key) const { return Rng(mix(seed_ ^ mix(key + 0x9e3779b97f4a7c15ULL))); }

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  std::mt19937_64& engine() noexcept { return engine_; }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace norml
