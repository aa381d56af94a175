#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace logopt {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

// Platform-stable generator. std::mt19937_64 has a fully specified output
// sequence; the standard distributions do not, so we only use raw draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard exponential via inversion; 1 - u lies in (0, 1].
  double exponential() { return -std::log1p(-uniform()); }

  // Inverse-CDF draw over a probability vector. Index i is chosen iff
  // cdf[i-1] <= u < cdf[i]; zero-probability entries are never chosen, and a
  // draw above the (rounded) total falls back to the last positive entry.
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double cdf = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = i;
      cdf += probs[i];
      if (u < cdf) return i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace logopt
