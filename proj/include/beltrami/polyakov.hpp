#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "beltrami/dense.hpp"
#include "beltrami/graph.hpp"

// Discrete Polyakov action S[Z, psi] = 1/2 sum_l sum_ij A_ij psi_ij^l(Z) with
// psi_ij^l(Z) = psi~_ij(p^i) (z_j^l - z_i^l)^2, where p^i_k = |z_i - z_k|^2.
// Its gradient flow is a graph diffusion whose diffusivity has a closed form;
// this header computes both sides so they can be checked against each other.
namespace beltrami {

class PsiFamily {
 public:
  using ValueFn = std::function<double(NodeId i, NodeId j, std::span<const double> p)>;
  using PartialFn = std::function<double(NodeId i, NodeId j, NodeId k, std::span<const double> p)>;

  // psi~ == 1: the classical Dirichlet energy.
  static PsiFamily classical() {
    PsiFamily f;
    f.classical_ = true;
    f.value_ = [](NodeId, NodeId, std::span<const double>) { return 1.0; };
    f.partial_ = [](NodeId, NodeId, NodeId, std::span<const double>) { return 0.0; };
    return f;
  }

  static PsiFamily custom(ValueFn value, PartialFn partial) {
    PsiFamily f;
    f.value_ = std::move(value);
    f.partial_ = std::move(partial);
    return f;
  }

  // psi~_ij(p) = c_ij (1 + sigmoid(sum_{k in N(i)} w_ik p_k)), with c and w
  // given per directed slot of g. Non-negative and local by construction.
  static PsiFamily sigmoid_family(const Graph& g, std::vector<double> c, std::vector<double> w) {
    if (c.size() != g.num_edge_slots() || w.size() != g.num_edge_slots())
      throw InputError("sigmoid family needs one c and one w per directed slot");
    struct Data {
      Graph g;
      std::vector<double> c, w;
      double activation(NodeId i, std::span<const double> p) const {
        double s = 0.0;
        const auto off = g.row_offsets();
        const auto cols = g.col_indices();
        for (std::size_t q = off[i]; q < off[i + 1]; ++q) s += w[q] * p[cols[q]];
        return 1.0 / (1.0 + std::exp(-s));
      }
      double coef(NodeId i, NodeId j) const {
        const std::size_t q = g.slot(i, j);
        return q < c.size() ? c[q] : 0.0;
      }
    };
    auto d = std::make_shared<Data>(Data{g, std::move(c), std::move(w)});
    PsiFamily f;
    f.value_ = [d](NodeId i, NodeId j, std::span<const double> p) { return d->coef(i, j) * (1.0 + d->activation(i, p)); };
    f.partial_ = [d](NodeId i, NodeId j, NodeId k, std::span<const double> p) {
      const std::size_t q = d->g.slot(i, k);
      if (q >= d->w.size()) return 0.0;
      const double sg = d->activation(i, p);
      return d->coef(i, j) * sg * (1.0 - sg) * d->w[q];
    };
    return f;
  }

  static PsiFamily random_sigmoid_family(const Graph& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> c_dist(0.5, 1.5), w_dist(0.05, 0.5);
    std::vector<double> c(g.num_edge_slots()), w(g.num_edge_slots());
    for (auto& v : c) v = c_dist(rng);
    for (auto& v : w) v = w_dist(rng);
    return sigmoid_family(g, std::move(c), std::move(w));
  }

  bool is_classical() const { return classical_; }
  double value(NodeId i, NodeId j, std::span<const double> p) const { return value_(i, j, p); }
  // d psi~_ij / d p_k
  double partial(NodeId i, NodeId j, NodeId k, std::span<const double> p) const { return partial_(i, j, k, p); }

 private:
  bool classical_ = false;
  ValueFn value_;
  PartialFn partial_;
};

namespace detail {

inline double row_sq_distance(const Matrix& z, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t c = 0; c < z.cols(); ++c) s += (z(a, c) - z(b, c)) * (z(a, c) - z(b, c));
  return s;
}

// profiles(i, k) = |z_i - z_k|^2
inline Matrix distance_profiles(const Matrix& z) {
  Matrix p(z.rows(), z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t k = 0; k < z.rows(); ++k) p(i, k) = row_sq_distance(z, i, k);
  return p;
}

inline void check_shape(const Graph& g, const Matrix& z) {
  if (z.rows() != g.num_nodes()) throw InputError("embedding rows do not match graph size");
}

}  // namespace detail

inline double action(const Graph& g, const Matrix& z, const PsiFamily& psi) {
  detail::check_shape(g, z);
  const Matrix p = detail::distance_profiles(z);
  double s = 0.0;
  for (NodeId i = 0; i < g.num_nodes(); ++i)
    for (NodeId j : g.neighbors(i)) s += psi.value(i, j, p.row(i)) * p(i, j);
  return 0.5 * s;
}

namespace detail {

inline double diffusivity_from_profiles(const Graph& g, const Matrix& p, const PsiFamily& psi, NodeId i, NodeId j) {
  double a = psi.value(i, j, p.row(i)) + psi.value(j, i, p.row(j));
  for (NodeId k : g.neighbors(i)) a += psi.partial(i, k, j, p.row(i)) * p(i, k);
  for (NodeId k : g.neighbors(j)) a += psi.partial(j, k, i, p.row(j)) * p(j, k);
  return a;
}

}  // namespace detail

// Closed-form diffusivity of the action's gradient flow on edge (i, j).
inline double closed_form_diffusivity(const Graph& g, const Matrix& z, const PsiFamily& psi, NodeId i, NodeId j) {
  detail::check_shape(g, z);
  if (!g.has_edge(i, j))
    throw InputError("(" + std::to_string(i) + "," + std::to_string(j) + ") is not an edge");
  return detail::diffusivity_from_profiles(g, detail::distance_profiles(z), psi, i, j);
}

// dS/dz_k = sum_{j in N(k)} a(z_k, z_j) (z_k - z_j)
inline Matrix grad_action(const Graph& g, const Matrix& z, const PsiFamily& psi) {
  detail::check_shape(g, z);
  const Matrix p = detail::distance_profiles(z);
  Matrix grad(z.rows(), z.cols());
  for (NodeId k = 0; k < g.num_nodes(); ++k)
    for (NodeId j : g.neighbors(k)) {
      const double a = detail::diffusivity_from_profiles(g, p, psi, k, j);
      for (std::size_t c = 0; c < z.cols(); ++c) grad(k, c) += a * (z(k, c) - z(j, c));
    }
  return grad;
}

// The same gradient by the plain chain rule, summing over every node pair
// without using locality. O(n^3); an independent route for checks.
inline Matrix grad_action_chain_rule(const Graph& g, const Matrix& z, const PsiFamily& psi) {
  detail::check_shape(g, z);
  const std::size_t n = z.rows(), dim = z.cols();
  const Matrix p = detail::distance_profiles(z);
  Matrix grad(n, dim);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j : g.neighbors(i)) {
      const double psi_ij = psi.value(i, j, p.row(i));
      const double edge_sq = p(i, j);
      // d/dz of psi~_ij(p^i) through p^i_s = |z_i - z_s|^2
      for (NodeId s = 0; s < n; ++s) {
        const double ds = psi.partial(i, j, s, p.row(i));
        if (ds == 0.0) continue;
        for (std::size_t c = 0; c < dim; ++c) {
          const double dp = 2.0 * (z(i, c) - z(s, c));
          grad(i, c) += 0.5 * ds * dp * edge_sq;
          grad(s, c) -= 0.5 * ds * dp * edge_sq;
        }
      }
      // d/dz of |z_j - z_i|^2
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = z(j, c) - z(i, c);
        grad(j, c) += psi_ij * diff;
        grad(i, c) -= psi_ij * diff;
      }
    }
  return grad;
}

// Central finite differences of the action, step h per coordinate.
inline Matrix grad_action_fd(const Graph& g, const Matrix& z, const PsiFamily& psi, double h = 1e-5) {
  Matrix grad(z.rows(), z.cols());
  Matrix probe = z;
  for (std::size_t q = 0; q < z.size(); ++q) {
    const double orig = probe.data()[q];
    probe.data()[q] = orig + h;
    const double up = action(g, probe, psi);
    probe.data()[q] = orig - h;
    const double down = action(g, probe, psi);
    probe.data()[q] = orig;
    grad.data()[q] = (up - down) / (2.0 * h);
  }
  return grad;
}

// dz_i/dt = sum_j a_ij (z_j - z_i) with the closed-form diffusivity.
inline Matrix beltrami_rhs_closed_form(const Graph& g, const Matrix& z, const PsiFamily& psi) {
  const Matrix p = detail::distance_profiles(z);
  Matrix d(z.rows(), z.cols());
  for (NodeId i = 0; i < g.num_nodes(); ++i)
    for (NodeId j : g.neighbors(i)) {
      const double a = detail::diffusivity_from_profiles(g, p, psi, i, j);
      for (std::size_t c = 0; c < z.cols(); ++c) d(i, c) += a * (z(j, c) - z(i, c));
    }
  return d;
}

// Empirical explicit-Euler step bound 1 / (2 max_degree max psi~) at z.
inline double stability_step_bound(const Graph& g, const Matrix& z, const PsiFamily& psi) {
  const Matrix p = detail::distance_profiles(z);
  double mx = 0.0;
  for (NodeId i = 0; i < g.num_nodes(); ++i)
    for (NodeId j : g.neighbors(i)) mx = std::max(mx, psi.value(i, j, p.row(i)));
  if (mx == 0.0 || g.max_degree() == 0) return std::numeric_limits<double>::infinity();
  return 1.0 / (2.0 * static_cast<double>(g.max_degree()) * mx);
}

struct GradientFlowReport {
  std::vector<double> actions;  // S before step 1, ..., after the last step
  bool monotone = true;
  std::optional<std::size_t> first_violation;  // step whose update raised S
  double max_route_gap = 0.0;  // chain-rule flow vs closed-form diffusion flow
  double route_tolerance = 1e-12;
  double stability_bound = 0.0;
  bool passed() const { return monotone && max_route_gap <= route_tolerance; }
};

// Runs dZ/dt = -grad S with explicit Euler along two routes (chain-rule
// gradient and closed-form diffusivity), recording S along the first.
// A step counts as an increase only beyond round-off: S' > S (1 + 1e-12) + 1e-15.
inline GradientFlowReport verify_gradient_flow(const Graph& g, const Matrix& z0, const PsiFamily& psi,
                                               std::size_t steps, double tau) {
  if (!(tau > 0.0)) throw InputError("tau must be positive");
  GradientFlowReport rep;
  rep.stability_bound = stability_step_bound(g, z0, psi);
  Matrix za = z0, zb = z0;
  rep.actions.push_back(action(g, za, psi));
  for (std::size_t k = 1; k <= steps; ++k) {
    const Matrix grad = grad_action_chain_rule(g, za, psi);
    const Matrix flow = beltrami_rhs_closed_form(g, zb, psi);
    for (std::size_t q = 0; q < za.size(); ++q) {
      za.data()[q] -= tau * grad.data()[q];
      zb.data()[q] += tau * flow.data()[q];
    }
    if (!all_finite(za)) throw NumericalError("blow-up in gradient flow at step " + std::to_string(k));
    rep.max_route_gap = std::max(rep.max_route_gap, max_abs_diff(za, zb));
    const double s = action(g, za, psi);
    const double prev = rep.actions.back();
    if (s > prev * (1.0 + 1e-12) + 1e-15 && rep.monotone) {
      rep.monotone = false;
      rep.first_violation = k;
    }
    rep.actions.push_back(s);
  }
  return rep;
}

}  // namespace beltrami
