#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "beltrami/errors.hpp"

namespace beltrami {

using NodeId = std::uint32_t;
using EdgePair = std::pair<NodeId, NodeId>;

// Immutable undirected graph in compressed-row form. Every undirected edge is
// stored as two directed slots; rows are strictly ascending. Copies share
// storage.
class Graph {
 public:
  Graph() : storage_(std::make_shared<Storage>()) { storage_->row_offsets = {0}; }

  // Symmetrizes, drops self-loops and duplicates. n = max(max id + 1, min_nodes).
  static Graph from_edge_list(std::span<const EdgePair> pairs, std::size_t min_nodes = 0) {
    if (pairs.empty() && min_nodes == 0) throw InputError("empty graph");
    std::size_t n = min_nodes;
    for (auto [a, b] : pairs) n = std::max<std::size_t>(n, std::max(a, b) + std::size_t{1});
    std::vector<EdgePair> slots;
    slots.reserve(pairs.size() * 2);
    for (auto [a, b] : pairs) {
      if (a == b) continue;
      slots.emplace_back(a, b);
      slots.emplace_back(b, a);
    }
    std::sort(slots.begin(), slots.end());
    slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
    return from_sorted_slots(n, slots);
  }

  // Builds from directed slots exactly as given and checks every invariant,
  // naming the first one violated. Used to audit externally produced adjacency.
  static Graph from_directed_slots(std::size_t n, std::span<const EdgePair> directed) {
    std::vector<EdgePair> slots(directed.begin(), directed.end());
    for (auto [a, b] : slots) {
      if (a >= n || b >= n) throw InputError("invariant violated: node id range");
      if (a == b) throw InputError("invariant violated: no self-loops");
    }
    std::sort(slots.begin(), slots.end());
    if (std::adjacent_find(slots.begin(), slots.end()) != slots.end())
      throw InputError("invariant violated: no duplicate edges");
    for (auto [a, b] : slots)
      if (!std::binary_search(slots.begin(), slots.end(), EdgePair{b, a}))
        throw InputError("invariant violated: symmetry (" + std::to_string(a) + "," + std::to_string(b) +
                         ") has no reverse slot");
    return from_sorted_slots(n, slots);
  }

  std::size_t num_nodes() const { return storage_->row_offsets.size() - 1; }
  std::size_t num_edge_slots() const { return storage_->col_indices.size(); }
  std::size_t num_undirected_edges() const { return num_edge_slots() / 2; }

  std::span<const std::size_t> row_offsets() const { return storage_->row_offsets; }
  std::span<const NodeId> col_indices() const { return storage_->col_indices; }

  std::span<const NodeId> neighbors(NodeId i) const {
    check_node(i);
    const auto& s = *storage_;
    return {s.col_indices.data() + s.row_offsets[i], s.row_offsets[i + 1] - s.row_offsets[i]};
  }

  std::size_t degree(NodeId i) const { return neighbors(i).size(); }

  std::size_t max_degree() const {
    std::size_t d = 0;
    for (std::size_t i = 0; i < num_nodes(); ++i)
      d = std::max(d, storage_->row_offsets[i + 1] - storage_->row_offsets[i]);
    return d;
  }

  bool has_edge(NodeId i, NodeId j) const {
    auto nb = neighbors(i);
    return std::binary_search(nb.begin(), nb.end(), j);
  }

  // Slot index of directed edge (i, j), or num_edge_slots() if absent.
  std::size_t slot(NodeId i, NodeId j) const {
    auto nb = neighbors(i);
    auto it = std::lower_bound(nb.begin(), nb.end(), j);
    if (it == nb.end() || *it != j) return num_edge_slots();
    return storage_->row_offsets[i] + static_cast<std::size_t>(it - nb.begin());
  }

  // Each undirected edge once, as (i, j) with i < j, in row order.
  std::vector<EdgePair> undirected_edges() const {
    std::vector<EdgePair> out;
    out.reserve(num_undirected_edges());
    for (NodeId i = 0; i < num_nodes(); ++i)
      for (NodeId j : neighbors(i))
        if (i < j) out.emplace_back(i, j);
    return out;
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.storage_ == b.storage_ || (a.storage_->row_offsets == b.storage_->row_offsets &&
                                        a.storage_->col_indices == b.storage_->col_indices);
  }

 private:
  struct Storage {
    std::vector<std::size_t> row_offsets;
    std::vector<NodeId> col_indices;
  };

  static Graph from_sorted_slots(std::size_t n, const std::vector<EdgePair>& slots) {
    Graph g;
    auto& s = *g.storage_;
    s.row_offsets.assign(n + 1, 0);
    s.col_indices.reserve(slots.size());
    for (auto [a, b] : slots) {
      ++s.row_offsets[a + 1];
      s.col_indices.push_back(b);
    }
    for (std::size_t i = 0; i < n; ++i) s.row_offsets[i + 1] += s.row_offsets[i];
    return g;
  }

  void check_node(NodeId i) const {
    if (i >= num_nodes())
      throw InputError("node id " + std::to_string(i) + " out of range [0, " + std::to_string(num_nodes()) + ")");
  }

  std::shared_ptr<Storage> storage_;
};

struct ComponentResult {
  Graph graph;
  // Indexed by original id; kDropped for nodes outside the component.
  std::vector<std::int64_t> old_to_new;
  std::vector<NodeId> new_to_old;
  static constexpr std::int64_t kDropped = -1;
};

// Connected-component label per node, components numbered by smallest member.
inline std::vector<std::size_t> component_labels(const Graph& g) {
  const std::size_t n = g.num_nodes();
  constexpr std::size_t unseen = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(n, unseen);
  std::size_t next = 0;
  for (NodeId s = 0; s < n; ++s) {
    if (label[s] != unseen) continue;
    std::queue<NodeId> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      NodeId v = q.front();
      q.pop();
      for (NodeId w : g.neighbors(v))
        if (label[w] == unseen) {
          label[w] = next;
          q.push(w);
        }
    }
    ++next;
  }
  return label;
}

inline bool is_connected(const Graph& g) {
  auto labels = component_labels(g);
  return std::all_of(labels.begin(), labels.end(), [](std::size_t l) { return l == 0; });
}

// Induced subgraph on the largest component; ties go to the component holding
// the smallest original id. Ids are relabeled densely in original order.
inline ComponentResult largest_connected_component(const Graph& g) {
  const std::size_t n = g.num_nodes();
  auto labels = component_labels(g);
  std::vector<std::size_t> sizes;
  for (std::size_t l : labels) {
    if (l >= sizes.size()) sizes.resize(l + 1, 0);
    ++sizes[l];
  }
  // Labels are assigned in order of smallest member, so max_element's first
  // hit is the tie-break winner.
  const std::size_t best =
      sizes.empty() ? 0 : static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

  ComponentResult r;
  r.old_to_new.assign(n, ComponentResult::kDropped);
  for (NodeId i = 0; i < n; ++i)
    if (labels[i] == best) {
      r.old_to_new[i] = static_cast<std::int64_t>(r.new_to_old.size());
      r.new_to_old.push_back(i);
    }
  std::vector<EdgePair> edges;
  for (auto [a, b] : g.undirected_edges())
    if (labels[a] == best)
      edges.emplace_back(static_cast<NodeId>(r.old_to_new[a]), static_cast<NodeId>(r.old_to_new[b]));
  r.graph = Graph::from_edge_list(edges, r.new_to_old.size());
  return r;
}

struct LoadedGraph {
  Graph graph;
  // original_ids[k] is the file id that became dense node k.
  std::vector<std::uint64_t> original_ids;
};

// Tab- or whitespace-separated `i j` pairs; `#` lines and blank lines skipped.
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> read_raw_pairs(std::istream& in) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long a = -1, b = -1;
    if (!(ls >> a >> b) || a < 0 || b < 0)
      throw InputError("edge list line " + std::to_string(lineno) + ": expected two non-negative ids");
    raw.emplace_back(static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b));
  }
  return raw;
}

// Reads an edge list with arbitrary non-negative ids and remaps them densely
// in ascending id order.
inline LoadedGraph read_edge_list(std::istream& in) {
  auto raw = read_raw_pairs(in);
  if (raw.empty()) throw InputError("empty graph");
  std::map<std::uint64_t, NodeId> remap;
  for (auto [a, b] : raw) {
    remap.emplace(a, 0);
    remap.emplace(b, 0);
  }
  LoadedGraph out;
  NodeId next = 0;
  for (auto& [id, dense] : remap) {
    dense = next++;
    out.original_ids.push_back(id);
  }
  std::vector<EdgePair> pairs;
  pairs.reserve(raw.size());
  for (auto [a, b] : raw) pairs.emplace_back(remap[a], remap[b]);
  out.graph = Graph::from_edge_list(pairs, remap.size());
  return out;
}

inline void write_edge_list(std::ostream& out, const Graph& g) {
  for (auto [a, b] : g.undirected_edges()) out << a << '\t' << b << '\n';
}

}  // namespace beltrami
