#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "dido/geom.hpp"

namespace dido {

/// Derives an independent 64-bit seed for a named substream (splitmix64 over
/// an FNV-1a hash of the name).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = base ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t base, std::string_view stream) : engine_(derive_seed(base, stream)) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Component-wise N(0, sigma_i^2).
  Vec3 normal3(const Vec3& sigma) {
    const double a = normal(), b = normal(), c = normal();
    return {sigma.x() * a, sigma.y() * b, sigma.z() * c};
  }
  Vec3 normal3(double sigma) { return normal3(Vec3::Constant(sigma)); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dido
