#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/LU>

#include "beltrami/dense.hpp"
#include "beltrami/graph.hpp"
#include "beltrami/metric.hpp"

namespace beltrami {

enum class PprMode { Series, LinearSolve };

struct PprConfig {
  double beta = 0.85;  // restart probability is 1 - beta
  PprMode mode = PprMode::Series;
  std::size_t max_terms = 1000;
  double tol = 1e-10;  // series: bound on the truncated tail
  std::optional<std::size_t> topk;
};

struct PprEncoding {
  Matrix matrix;
  std::size_t terms_used = 0;  // series mode only
  bool graph_connected = true;
};

// Row-stochastic random-walk matrix D^{-1} A. Isolated nodes get a self-loop
// so their PPR row is the unit basis vector.
inline Eigen::MatrixXd transition_matrix(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    auto nb = g.neighbors(i);
    if (nb.empty()) {
      p(i, i) = 1.0;
      continue;
    }
    const double w = 1.0 / static_cast<double>(nb.size());
    for (NodeId j : nb) p(i, j) = w;
  }
  return p;
}

// Keeps the k largest entries of each row (ties to the smaller column), then
// symmetrizes the kept pattern by union: (i, j) survives if it is among the
// top k of row i or (j, i) is among the top k of row j.
inline void sparsify_topk(Matrix& m, std::size_t k) {
  if (m.rows() != m.cols()) throw InputError("topk sparsification needs a square matrix");
  const std::size_t n = m.rows();
  std::vector<char> keep(n * n, 0);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto row = m.row(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t r = 0; r < std::min(k, n); ++r) keep[i * n + idx[r]] = keep[idx[r] * n + i] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!keep[i * n + j]) m(i, j) = 0.0;
}

// Personalized PageRank (1 - beta) (I - beta P)^{-1}.
inline PprEncoding ppr_encode(const Graph& g, const PprConfig& cfg) {
  if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) throw InputError("ppr beta must lie in (0, 1)");
  if (cfg.max_terms < 1) throw InputError("ppr max_terms must be >= 1");
  if (!(cfg.tol > 0.0)) throw InputError("ppr tol must be positive");

  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  const Eigen::MatrixXd p = transition_matrix(g);
  PprEncoding out;
  out.graph_connected = is_connected(g);

  Eigen::MatrixXd u;
  if (cfg.mode == PprMode::Series) {
    Eigen::MatrixXd term = (1.0 - cfg.beta) * Eigen::MatrixXd::Identity(n, n);
    u = term;
    out.terms_used = 1;
    // Rows of the k-th term sum to (1 - beta) beta^k, so the entries left out
    // after k terms are bounded by beta^k.
    double tail = cfg.beta;
    while (out.terms_used < cfg.max_terms && tail >= cfg.tol) {
      term = cfg.beta * (p * term);
      u += term;
      ++out.terms_used;
      tail *= cfg.beta;
    }
  } else {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - cfg.beta * p;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw NumericalError("ppr: singular system");
    u = lu.solve((1.0 - cfg.beta) * Eigen::MatrixXd::Identity(n, n));
  }
  out.matrix = from_eigen(u);
  if (cfg.topk) sparsify_topk(out.matrix, *cfg.topk);
  return out;
}

// Stencil from the k largest off-diagonal PPR entries per row, symmetrized by
// union.
inline Graph ppr_topk_graph(const Matrix& ppr, std::size_t k) {
  const std::size_t n = ppr.rows();
  std::vector<EdgePair> edges;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    idx.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && ppr(i, j) > 0.0) idx.push_back(j);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ppr(i, a) > ppr(i, b); });
    for (std::size_t r = 0; r < std::min(k, idx.size()); ++r)
      edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(idx[r]));
  }
  return Graph::from_edge_list(edges, n);
}

struct HypEmbedConfig {
  std::size_t dim = 2;
  std::size_t epochs = 200;
  double lr = 0.1;
  std::size_t negatives_per_edge = 5;
  std::uint64_t seed = 0;
  double init_radius = 1e-3;
};

struct PoincareEmbedding {
  Matrix positions;
  Matrix initial;
  // Evaluation loss after each epoch (index 0 is the initial loss).
  std::vector<double> loss_history;
  double final_lr = 0.0;
};

namespace detail {

struct NegativeSampler {
  std::vector<std::vector<NodeId>> candidates;

  explicit NegativeSampler(const Graph& g) : candidates(g.num_nodes()) {
    for (NodeId i = 0; i < g.num_nodes(); ++i)
      for (NodeId k = 0; k < g.num_nodes(); ++k)
        if (k != i && !g.has_edge(i, k)) candidates[i].push_back(k);
  }

  template <class Rng>
  void draw(NodeId i, std::size_t count, Rng& rng, std::vector<NodeId>& out) const {
    out.clear();
    const auto& c = candidates[i];
    if (c.empty()) return;
    std::uniform_int_distribution<std::size_t> pick(0, c.size() - 1);
    for (std::size_t r = 0; r < count; ++r) out.push_back(c[pick(rng)]);
  }
};

// -log softmax over {positive} u negatives of -distance.
inline double link_loss(const MetricSpace& m, const Matrix& pos, NodeId i, NodeId j, const std::vector<NodeId>& neg) {
  const double dij = distance(m, pos.row(i), pos.row(j));
  double mx = -dij;
  std::vector<double> logits{-dij};
  for (NodeId k : neg) {
    logits.push_back(-distance(m, pos.row(i), pos.row(k)));
    mx = std::max(mx, logits.back());
  }
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return -(-dij - mx - std::log(s));
}

}  // namespace detail

// Shallow hyperbolic link embedding trained with Riemannian SGD. After each
// epoch the loss on a fixed evaluation sample is compared with the previous
// epoch; an increase reverts the epoch and halves the step size.
inline PoincareEmbedding poincare_embed(const Graph& g, const MetricSpace& m, const HypEmbedConfig& cfg) {
  if (m.kind != MetricKind::PoincareBall) throw InputError("poincare_embed needs a Poincare ball metric");
  if (m.dim != cfg.dim) throw InputError("metric dimension does not match embedding dimension");
  if (cfg.dim < 2) throw InputError("embedding dimension must be >= 2");
  if (cfg.epochs < 1) throw InputError("epochs must be >= 1");
  if (!(cfg.lr > 0.0)) throw InputError("lr must be positive");
  if (g.num_edge_slots() == 0) throw InputError("no supervision");

  const std::size_t n = g.num_nodes();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> coord(-cfg.init_radius, cfg.init_radius);

  PoincareEmbedding out;
  out.positions = Matrix(n, cfg.dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.positions.row(i);
    do {
      for (double& x : row) x = coord(rng);
    } while (detail::squared_norm(row) > cfg.init_radius * cfg.init_radius);
  }
  out.initial = out.positions;

  detail::NegativeSampler sampler(g);
  std::vector<EdgePair> slots;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j : g.neighbors(i)) slots.emplace_back(i, j);

  std::mt19937_64 eval_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<NodeId>> eval_negatives(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s)
    sampler.draw(slots[s].first, cfg.negatives_per_edge, eval_rng, eval_negatives[s]);

  auto eval_loss = [&](const Matrix& pos) {
    double total = 0.0;
    for (std::size_t s = 0; s < slots.size(); ++s)
      total += detail::link_loss(m, pos, slots[s].first, slots[s].second, eval_negatives[s]);
    return total / static_cast<double>(slots.size());
  };

  double lr = cfg.lr;
  double current = eval_loss(out.positions);
  out.loss_history.push_back(current);

  std::vector<NodeId> neg;
  std::vector<NodeId> targets;
  std::vector<double> weights;
  std::vector<std::vector<double>> grads;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix pos = out.positions;
    std::shuffle(slots.begin(), slots.end(), rng);
    for (auto [i, j] : slots) {
      sampler.draw(i, cfg.negatives_per_edge, rng, neg);
      targets.assign(1, j);
      targets.insert(targets.end(), neg.begin(), neg.end());

      // d loss / d distance(i, t): softmax weight, minus one for the positive.
      weights.resize(targets.size());
      double mx = -1e300;
      for (std::size_t t = 0; t < targets.size(); ++t) {
        weights[t] = -distance(m, pos.row(i), pos.row(targets[t]));
        mx = std::max(mx, weights[t]);
      }
      double z = 0.0;
      for (double& w : weights) z += (w = std::exp(w - mx));
      for (double& w : weights) w = -w / z;
      weights[0] += 1.0;

      std::vector<double> gi(cfg.dim, 0.0);
      grads.assign(targets.size(), std::vector<double>(cfg.dim, 0.0));
      for (std::size_t t = 0; t < targets.size(); ++t) {
        auto du = poincare_distance_grad(pos.row(i), pos.row(targets[t]));
        auto dv = poincare_distance_grad(pos.row(targets[t]), pos.row(i));
        for (std::size_t c = 0; c < cfg.dim; ++c) {
          gi[c] += weights[t] * du[c];
          grads[t][c] = weights[t] * dv[c];
        }
      }
      auto step = [&](NodeId node, const std::vector<double>& grad) {
        auto row = pos.row(node);
        auto rg = riemannian_scale(m, row, grad);
        for (std::size_t c = 0; c < cfg.dim; ++c) row[c] -= lr * rg[c];
        project_in_place(m, row);
      };
      step(i, gi);
      for (std::size_t t = 0; t < targets.size(); ++t) step(targets[t], grads[t]);
    }
    const double next = eval_loss(pos);
    if (next > current) {
      lr *= 0.5;
    } else {
      out.positions = std::move(pos);
      current = next;
    }
    out.loss_history.push_back(current);
  }
  out.final_lr = lr;
  return out;
}

}  // namespace beltrami
