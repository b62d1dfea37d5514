#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ism {

/// Dense double vector. All embedding math in this library runs in double
/// precision so analytic gradients can be checked against finite differences
/// at tight tolerances.
using Vec = std::vector<double>;

namespace vec {

inline void check_same_dim(std::span<const double> a, std::span<const double> b,
                           const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

/// ||a - b||_2
inline double dist(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b, "dist");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// ||a + b||_2
inline double sum_norm(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b, "sum_norm");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = a[i] + b[i];
    s += v * v;
  }
  return std::sqrt(s);
}

inline void axpy(double c, std::span<const double> x, Vec& y) {
  check_same_dim(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline Vec scaled(std::span<const double> x, double c) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
  return out;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace vec
}  // namespace ism
