#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "beltrami/errors.hpp"

namespace beltrami {

enum class MetricKind { Euclidean, PoincareBall };

// Positional coordinate space. The ball has curvature -1; `eps` is the margin
// kept from the boundary by project().
struct MetricSpace {
  MetricKind kind = MetricKind::Euclidean;
  std::size_t dim = 0;
  double eps = 1e-5;

  static MetricSpace euclidean(std::size_t dim) { return {MetricKind::Euclidean, dim, 1e-5}; }
  static MetricSpace poincare_ball(std::size_t dim, double eps = 1e-5) {
    if (!(eps > 0.0)) throw InputError("ball eps must be positive");
    return {MetricKind::PoincareBall, dim, eps};
  }
};

namespace detail {

inline double squared_norm(std::span<const double> u) {
  double s = 0.0;
  for (double x : u) s += x * x;
  return s;
}

inline double squared_distance(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += (u[k] - v[k]) * (u[k] - v[k]);
  return s;
}

inline void check_dim(const MetricSpace& m, std::span<const double> u) {
  if (u.size() != m.dim)
    throw InputError("point has dimension " + std::to_string(u.size()) + ", metric expects " +
                     std::to_string(m.dim));
}

}  // namespace detail

inline double distance(const MetricSpace& m, std::span<const double> u, std::span<const double> v) {
  detail::check_dim(m, u);
  detail::check_dim(m, v);
  const double sq = detail::squared_distance(u, v);
  if (m.kind == MetricKind::Euclidean) return std::sqrt(sq);

  const double a = 1.0 - detail::squared_norm(u);
  const double b = 1.0 - detail::squared_norm(v);
  if (!(a > 0.0) || !(b > 0.0)) throw InputError("point outside the Poincare ball");
  // arcosh(1 + x) = log1p(x + sqrt(x (x + 2))), accurate for small x
  const double x = 2.0 * sq / (a * b);
  return std::log1p(x + std::sqrt(x * (x + 2.0)));
}

inline void project_in_place(const MetricSpace& m, std::span<double> u) {
  if (m.kind == MetricKind::Euclidean) return;
  const double norm = std::sqrt(detail::squared_norm(u));
  const double limit = 1.0 - m.eps;
  if (norm > limit) {
    const double s = limit / norm;
    for (double& x : u) x *= s;
  }
}

inline std::vector<double> project(const MetricSpace& m, std::span<const double> u) {
  std::vector<double> out(u.begin(), u.end());
  project_in_place(m, out);
  return out;
}

// Converts a Euclidean gradient into the Riemannian one by the inverse of the
// conformal metric factor.
inline std::vector<double> riemannian_scale(const MetricSpace& m, std::span<const double> u,
                                            std::span<const double> grad) {
  std::vector<double> out(grad.begin(), grad.end());
  if (m.kind == MetricKind::Euclidean) return out;
  const double a = 1.0 - detail::squared_norm(u);
  const double f = a * a / 4.0;
  for (double& g : out) g *= f;
  return out;
}

// Euclidean gradient of the ball distance with respect to its first argument.
// Zero at u == v, where the distance is not differentiable.
inline std::vector<double> poincare_distance_grad(std::span<const double> u, std::span<const double> v) {
  const double sq = detail::squared_distance(u, v);
  const double a = 1.0 - detail::squared_norm(u);
  const double b = 1.0 - detail::squared_norm(v);
  const double gamma = 1.0 + 2.0 * sq / (a * b);
  std::vector<double> g(u.size(), 0.0);
  const double denom = std::sqrt(gamma * gamma - 1.0);
  if (!(denom > 1e-15)) return g;
  const double c = 4.0 / (a * b * denom);
  for (std::size_t k = 0; k < u.size(); ++k) g[k] = c * ((u[k] - v[k]) + sq * u[k] / a);
  return g;
}

}  // namespace beltrami
