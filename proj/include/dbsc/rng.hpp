#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dbsc {

// splitmix64 finalizer; used to derive independent stream seeds from a
// master seed and a counter.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

/// Thin wrapper over mt19937_64 with the handful of draws the samplers need.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::mt19937_64& engine() { return engine_; }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform on (0, 1]; never returns 0 so log(u) is always finite.
  double uniform_pos() { return 1.0 - std::generate_canonical<double, 64>(engine_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * std::generate_canonical<double, 64>(engine_);
  }

  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }

  // InvGamma(shape, rate b): density proportional to x^{-shape-1} exp(-b/x).
  double inv_gamma(double shape, double rate) { return 1.0 / gamma(shape, 1.0 / rate); }

  bool bernoulli(double p) { return uniform_pos() <= p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dbsc
