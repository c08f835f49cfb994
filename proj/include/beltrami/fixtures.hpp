#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "beltrami/dense.hpp"
#include "beltrami/graph.hpp"

// Small built-in graphs and seeded random instances.
namespace beltrami::fixtures {

// Zachary's karate club (0-based), 78 undirected friendships.
inline Graph karate() {
  static constexpr std::array<std::pair<int, int>, 78> edges{{
      {0, 1},   {0, 2},   {0, 3},   {0, 4},   {0, 5},   {0, 6},   {0, 7},   {0, 8},   {0, 10},  {0, 11},
      {0, 12},  {0, 13},  {0, 17},  {0, 19},  {0, 21},  {0, 31},  {1, 2},   {1, 3},   {1, 7},   {1, 13},
      {1, 17},  {1, 19},  {1, 21},  {1, 30},  {2, 3},   {2, 7},   {2, 8},   {2, 9},   {2, 13},  {2, 27},
      {2, 28},  {2, 32},  {3, 7},   {3, 12},  {3, 13},  {4, 6},   {4, 10},  {5, 6},   {5, 10},  {5, 16},
      {6, 16},  {8, 30},  {8, 32},  {8, 33},  {9, 33},  {13, 33}, {14, 32}, {14, 33}, {15, 32}, {15, 33},
      {18, 32}, {18, 33}, {19, 33}, {20, 32}, {20, 33}, {22, 32}, {22, 33}, {23, 25}, {23, 27}, {23, 29},
      {23, 32}, {23, 33}, {24, 25}, {24, 27}, {24, 31}, {25, 31}, {26, 29}, {26, 33}, {27, 33}, {28, 31},
      {28, 33}, {29, 32}, {29, 33}, {30, 32}, {30, 33}, {31, 32}, {31, 33}, {32, 33},
  }};
  std::vector<EdgePair> pairs;
  for (auto [a, b] : edges) pairs.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
  return Graph::from_edge_list(pairs);
}

// Faction after the split: 0 for the instructor's group, 1 for the officer's.
inline std::vector<int> karate_labels() {
  std::vector<int> y(34, 1);
  for (int i : {0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 13, 16, 17, 19, 21}) y[i] = 0;
  return y;
}

inline Graph path(std::size_t n) {
  std::vector<EdgePair> e;
  for (NodeId i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph::from_edge_list(e, n);
}

inline Graph cycle(std::size_t n) {
  std::vector<EdgePair> e;
  for (NodeId i = 0; i < n; ++i) e.emplace_back(i, static_cast<NodeId>((i + 1) % n));
  return Graph::from_edge_list(e, n);
}

inline Graph star(std::size_t leaves) {
  std::vector<EdgePair> e;
  for (NodeId i = 1; i <= leaves; ++i) e.emplace_back(0, i);
  return Graph::from_edge_list(e);
}

// Two 5-cliques {0..4} and {5..9} joined by the edge (4, 5).
inline Graph two_cliques() {
  std::vector<EdgePair> e;
  for (NodeId c = 0; c < 2; ++c)
    for (NodeId i = 0; i < 5; ++i)
      for (NodeId j = i + 1; j < 5; ++j) e.emplace_back(5 * c + i, 5 * c + j);
  e.emplace_back(4, 5);
  return Graph::from_edge_list(e);
}

// Erdos-Renyi G(n, p); with `connected` a random spanning path is added.
inline Graph random_graph(std::size_t n, double p, std::mt19937_64& rng, bool connected = true) {
  std::bernoulli_distribution coin(p);
  std::vector<EdgePair> e;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (coin(rng)) e.emplace_back(i, j);
  if (connected) {
    std::vector<NodeId> order(n);
    for (NodeId i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k + 1 < n; ++k) e.emplace_back(order[k], order[k + 1]);
  }
  return Graph::from_edge_list(e, n);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

// Points strictly inside the ball of radius `radius`.
inline Matrix random_ball_points(std::size_t rows, std::size_t dim, std::mt19937_64& rng, double radius = 0.9) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Matrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = m.row(i);
    double sq = 0.0;
    do {
      sq = 0.0;
      for (double& x : row) {
        x = u(rng);
        sq += x * x;
      }
    } while (sq >= radius * radius);
  }
  return m;
}

}  // namespace beltrami::fixtures
