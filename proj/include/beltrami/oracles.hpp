#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "beltrami/dense.hpp"
#include "beltrami/graph.hpp"
#include "beltrami/metric.hpp"

// Reference computations that share no code path with the library routines
// they are used to check. Slow on purpose.
namespace beltrami::oracle {

// exp(A) by scaling and squaring around a 30-term Taylor series.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXd scaled = a / std::ldexp(1.0, squarings);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

// Adjacency matrix of the k-nearest-neighbour graph from a full sort of all
// pairwise distances, symmetrized by union.
inline std::vector<std::vector<bool>> knn_adjacency(const Matrix& u, std::size_t k, const MetricSpace& m) {
  const std::size_t n = u.rows();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = distance(m, u.row(i), u.row(j));
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return d[i][a] < d[i][b] || (d[i][a] == d[i][b] && a < b);
    });
    for (std::size_t r = 0; r < k && r < order.size(); ++r) adj[i][order[r]] = adj[order[r]][i] = true;
  }
  return adj;
}

inline bool same_adjacency(const Graph& g, const std::vector<std::vector<bool>>& adj) {
  if (g.num_nodes() != adj.size()) return false;
  for (std::size_t i = 0; i < adj.size(); ++i)
    for (std::size_t j = 0; j < adj.size(); ++j)
      if (adj[i][j] != g.has_edge(static_cast<NodeId>(i), static_cast<NodeId>(j))) return false;
  return true;
}

// Component members via union-find, each sorted, in order of smallest member.
inline std::vector<std::vector<NodeId>> components(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [a, b] : g.undirected_edges()) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::vector<NodeId>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(static_cast<NodeId>(i));
  std::vector<std::vector<NodeId>> out;
  for (auto& grp : groups)
    if (!grp.empty()) out.push_back(std::move(grp));
  return out;
}

// PPR through the spectrum of the symmetric normalization
// D^{-1/2} A D^{-1/2}; needs every node to have a neighbour.
inline Eigen::MatrixXd ppr_spectral(const Graph& g, double beta) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd dh(n);
  for (Eigen::Index i = 0; i < n; ++i) dh(i) = std::sqrt(static_cast<double>(g.degree(static_cast<NodeId>(i))));
  for (auto [a, b] : g.undirected_edges()) s(a, b) = s(b, a) = 1.0 / (dh(a) * dh(b));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  Eigen::VectorXd f = es.eigenvalues().unaryExpr([&](double l) { return (1.0 - beta) / (1.0 - beta * l); });
  const Eigen::MatrixXd inner = es.eigenvectors() * f.asDiagonal() * es.eigenvectors().transpose();
  return dh.cwiseInverse().asDiagonal() * inner * dh.asDiagonal();
}

// Dense row-stochastic matrix of edge weights.
inline Eigen::MatrixXd weight_matrix(const Graph& g, const std::vector<double>& w) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  const auto off = g.row_offsets();
  const auto cols = g.col_indices();
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    for (std::size_t q = off[i]; q < off[i + 1]; ++q) a(i, cols[q]) = w[q];
  return a;
}

}  // namespace beltrami::oracle
