#pragma once

#include "ace/core/types.hpp"

#include <cstdint>
#include <random>

namespace ace {

/// Seeded generator used by every stochastic operation. Runs are
/// reproducible for a fixed seed on a given standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  template <typename Scalar>
  ImageArray<Scalar> normal(Eigen::Index rows, Eigen::Index cols) {
    ImageArray<Scalar> out(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<Scalar>(dist(engine_));
    return out;
  }

  template <typename Scalar>
  ImageArray<Scalar> normal(const Geometry& g) {
    return normal<Scalar>(g.channels, g.pixels());
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  double gaussian(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent child seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ace
