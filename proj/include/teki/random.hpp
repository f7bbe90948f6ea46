#pragma once

#include <cstdint>
#include <random>

#include "teki/linalg.hpp"

namespace teki {

/// SplitMix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(base ^ mix_seed(stream + 0x632BE59BD9B4E019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }

  Vector standard_normal(Index n) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) out[i] = normal_(engine_);
    return out;
  }

  /// mean + L w with w ~ N(0, I); L a Cholesky factor of the covariance.
  Vector gaussian(const Vector& mean, const Matrix& lower) { return mean + lower * standard_normal(mean.size()); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace teki
