#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ism {

/// splitmix64 finalizer; used to derive independent substreams from one seed
/// so per-anchor / per-batch randomness does not depend on iteration order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b), c);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

/// Uniform double in [0, 1). Hand-rolled from raw bits so the stream is
/// defined by this code alone, not by the standard library vendor.
inline double next_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). n must be > 0.
inline std::size_t next_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(next_unit(rng) * static_cast<double>(n));
}

/// Uniform double in [lo, hi).
inline double next_uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * next_unit(rng);
}

/// Standard normal via Box-Muller (the cos branch only, one draw per call
/// would waste the pair; we keep both).
class NormalDraw {
 public:
  double operator()(std::mt19937_64& rng) {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_unit(rng);
    while (u1 <= 0.0) u1 = next_unit(rng);
    const double u2 = next_unit(rng);
    const double m = std::sqrt(-2.0 * std::log(u1));
    spare_ = m * std::sin(6.283185307179586476925286766559 * u2);
    have_spare_ = true;
    return m * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
inline double next_gamma(std::mt19937_64& rng, double shape) {
  if (shape < 1.0) {
    // Boost to shape+1 and scale back.
    const double u = next_unit(rng);
    return next_gamma(rng, shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  NormalDraw normal;
  for (;;) {
    double x = normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = next_unit(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

/// Beta(a, a) via the gamma ratio.
inline double next_beta_symmetric(std::mt19937_64& rng, double a) {
  const double x = next_gamma(rng, a);
  const double y = next_gamma(rng, a);
  const double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

/// In-place Fisher-Yates shuffle driven by next_index.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = next_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ism
