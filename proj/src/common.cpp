// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/common.hpp"

#include <cmath>

namespace wiseopen {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

Vector random_unit_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector u(dim);
  double n2 = 0.0;
  do {
    for (auto& v : u) v = gauss(rng);
    n2 = squared_norm(u);
  } while (n2 == 0.0);
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& v : u) v *= inv;
  return u;
}

std::vector<Vector> random_orthonormal_frame(std::size_t dim, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vector> q;
  while (q.size() < cols) {
    Vector v(dim);
    for (auto& e : v) e = gauss(rng);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : q) {
        const double c = dot(v, b);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= c * b[i];
      }
    const double n = norm(v);
    if (n < 1e-8) continue;
    for (auto& e : v) e /= n;
    q.push_back(std::move(v));
  }
  return q;
}

}  // namespace wiseopen
