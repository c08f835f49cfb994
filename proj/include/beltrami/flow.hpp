#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "beltrami/diffusivity.hpp"
#include "beltrami/graph.hpp"
#include "beltrami/metric.hpp"
#include "beltrami/state.hpp"

namespace beltrami {

// dz_i = sum_j a(z_i, z_j) (z_j - z_i), applied to the U and X blocks.
template <class T>
JointTangent<T> apply_diffusion(const EdgeWeights<T>& w, const JointState<T>& s) {
  const Graph& g = w.stencil;
  if (s.num_nodes() != g.num_nodes()) throw InputError("state rows do not match graph size");
  JointTangent<T> d = zero_tangent_like(s);
  const auto offsets = g.row_offsets();
  const auto cols = g.col_indices();
  const std::size_t dp = s.pos_dim(), df = s.feat_dim();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const std::size_t j = cols[k];
      const T& a = w.values[k];
      for (std::size_t c = 0; c < dp; ++c) d.dU(i, c) += a * (s.U(j, c) - s.U(i, c));
      for (std::size_t c = 0; c < df; ++c) d.dX(i, c) += a * (s.X(j, c) - s.X(i, c));
    }
  }
  return d;
}

// Right-hand side of the graph Beltrami flow on stencil g.
template <class T>
JointTangent<T> rhs(const Graph& g, const JointState<T>& s, const DiffusivityParams<T>& p) {
  return apply_diffusion(compute_weights(g, s, p), s);
}

using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// One explicit Euler step as a matrix: diagonal 1 - tau * sum_l a_il and
// tau * a_ij on stencil edges.
inline SparseOperator build_q(const Graph& g, const EdgeWeights<double>& w, double tau) {
  if (!(tau > 0.0)) throw InputError("step size must be positive");
  if (!(w.stencil == g) || w.values.size() != g.num_edge_slots())
    throw InputError("edge weights were computed on a different stencil");
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.num_edge_slots() + g.num_nodes());
  const auto offsets = g.row_offsets();
  const auto cols = g.col_indices();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    double total = 0.0;
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      total += w.values[k];
      trip.emplace_back(static_cast<int>(i), static_cast<int>(cols[k]), tau * w.values[k]);
    }
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 - tau * total);
  }
  SparseOperator q(n, n);
  q.setFromTriplets(trip.begin(), trip.end());
  return q;
}

inline JointState<double> apply_operator(const SparseOperator& q, const JointState<double>& s) {
  JointState<double> out = s;
  if (s.U.cols() > 0) as_eigen(out.U) = q * as_eigen(s.U);
  if (s.X.cols() > 0) as_eigen(out.X) = q * as_eigen(s.X);
  return out;
}

// GAT-style residual attention update on features alone:
// x_i + tau * sum_j a(x_i, x_j) (x_j - x_i), with a softmax/squareplus
// normalized over the fixed stencil. Written independently of rhs().
inline Matrix gat_reduction_step(const Graph& g, const Matrix& x, const DiffusivityParams<double>& p, double tau,
                                 double alpha = 1.0) {
  if (p.pos_dim != 0) throw InputError("GAT reduction has no positional channels");
  Matrix scaled = x;
  for (double& v : scaled.data()) v *= alpha;
  Matrix out = x;
  std::vector<double> logits;
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    auto nb = g.neighbors(i);
    if (nb.empty()) continue;
    logits.clear();
    for (NodeId j : nb) logits.push_back(raw_logit<double>(p, scaled.row(i), scaled.row(j)));
    std::vector<double> a(logits.size());
    double total = 0.0;
    if (p.normalizer == Normalizer::Softmax) {
      const double shift = *std::max_element(logits.begin(), logits.end());
      for (std::size_t k = 0; k < a.size(); ++k) total += (a[k] = std::exp(logits[k] - shift));
    } else {
      for (std::size_t k = 0; k < a.size(); ++k) total += (a[k] = squareplus(logits[k]));
    }
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < nb.size(); ++k) acc += (a[k] / total) * (x(nb[k], c) - x(i, c));
      out(i, c) = x(i, c) + tau * acc;
    }
  }
  return out;
}

enum class RewiringMode { Fixed, PrecomputedKnn, AdaptiveKnn, Radius };

inline RewiringMode rewiring_from_name(std::string_view s) {
  if (s == "fixed") return RewiringMode::Fixed;
  if (s == "knn_precomputed") return RewiringMode::PrecomputedKnn;
  if (s == "knn_adaptive") return RewiringMode::AdaptiveKnn;
  if (s == "radius") return RewiringMode::Radius;
  throw InputError("unknown rewiring mode '" + std::string(s) + "'");
}

// How the stencil E' is chosen. Radius mode connects pairs closer than
// `radius` and, like PrecomputedKnn, is evaluated once on U(0).
struct RewiringPolicy {
  RewiringMode mode = RewiringMode::Fixed;
  std::size_t k = 1;
  std::size_t refresh_every = 10;  // accepted solver steps, adaptive mode only
  double radius = 0.0;
  Graph base;

  void validate() const {
    if (k < 1) throw InputError("rewiring k must be >= 1");
    if (refresh_every < 1) throw InputError("refresh_every must be >= 1");
  }
};

// k nearest distinct nodes of each node (ties to the smaller id),
// symmetrized by union.
inline Graph knn_graph(const Matrix& u, std::size_t k, const MetricSpace& m) {
  const std::size_t n = u.rows();
  if (k >= n) throw InputError("k must be smaller than the node count");
  std::vector<EdgePair> edges;
  edges.reserve(n * k);
  std::vector<std::pair<double, NodeId>> cand(n - 1);
  for (NodeId i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (NodeId j = 0; j < n; ++j)
      if (j != i) cand[c++] = {distance(m, u.row(i), u.row(j)), j};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) edges.emplace_back(i, cand[r].second);
  }
  return Graph::from_edge_list(edges, n);
}

inline Graph radius_graph(const Matrix& u, double radius, const MetricSpace& m) {
  const std::size_t n = u.rows();
  std::vector<EdgePair> edges;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (distance(m, u.row(i), u.row(j)) < radius) edges.emplace_back(i, j);
  return Graph::from_edge_list(edges, n);
}

inline Graph rewire(const RewiringPolicy& policy, const Matrix& u, const MetricSpace& m) {
  policy.validate();
  switch (policy.mode) {
    case RewiringMode::Fixed: return policy.base;
    case RewiringMode::PrecomputedKnn:
    case RewiringMode::AdaptiveKnn: return knn_graph(u, policy.k, m);
    case RewiringMode::Radius: return radius_graph(u, policy.radius, m);
  }
  return policy.base;
}

// Beltrami flow on a (possibly rewired) stencil, packaged for the solvers:
// callable as the rhs and notified of accepted steps.
class BeltramiSystem {
 public:
  BeltramiSystem(RewiringPolicy policy, MetricSpace metric, DiffusivityParams<double> params,
                 const JointState<double>& initial)
      : policy_(std::move(policy)), metric_(metric), params_(std::move(params)) {
    params_.validate();
    stencil_ = rewire(policy_, initial.U, metric_);
  }

  JointTangent<double> operator()(const JointState<double>& s) const { return rhs(stencil_, s, params_); }

  void on_accepted_step(const JointState<double>& s, std::size_t accepted) {
    if (policy_.mode == RewiringMode::AdaptiveKnn && accepted % policy_.refresh_every == 0) {
      stencil_ = rewire(policy_, s.U, metric_);
      ++rewires_;
    }
  }

  const Graph& stencil() const { return stencil_; }
  std::size_t rewires() const { return rewires_; }
  const DiffusivityParams<double>& params() const { return params_; }

 private:
  RewiringPolicy policy_;
  MetricSpace metric_;
  DiffusivityParams<double> params_;
  Graph stencil_;
  std::size_t rewires_ = 0;
};

}  // namespace beltrami
