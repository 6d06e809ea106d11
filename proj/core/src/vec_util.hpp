#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace rqrf::detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Scales to unit norm; a zero vector is left unchanged.
inline void normalize(std::vector<double>& v) {
  const double n = norm(v);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
}

/// Cosine similarity; zero when either side is the zero vector.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
  return dot(a, b) / (na * nb);
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace rqrf::detail
