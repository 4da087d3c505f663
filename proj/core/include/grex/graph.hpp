#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grex/tensor.hpp"

namespace grex {

using NodeIndex = int;
/// Position of an undirected edge in Graph::edges(); the stable identity used
/// by EdgeWeights and Explanation vectors.
using EdgeId = int;

struct UndirectedEdge {
  NodeIndex u = 0;  // u < v always
  NodeIndex v = 0;
  bool operator==(const UndirectedEdge&) const = default;
};

struct NeighborEntry {
  NodeIndex neighbor = 0;
  EdgeId edge = 0;
};

/// Undirected attributed graph. Immutable after construction: build via
/// build_graph (which canonicalizes and validates) or the JSON loader.
/// Edge order is lexicographic by (u, v), so EdgeIds are reproducible.
class Graph {
 public:
  Graph() = default;

  int num_nodes() const { return num_nodes_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<UndirectedEdge>& edges() const { return edges_; }
  const UndirectedEdge& edge(EdgeId id) const;

  /// Node features, num_nodes x feature_dim, never taped.
  const Tensor& node_features() const { return features_; }
  int feature_dim() const { return features_.cols; }

  bool has_node_labels() const { return !node_labels_.empty(); }
  const std::vector<int>& node_labels() const { return node_labels_; }
  std::optional<int> graph_label() const { return graph_label_; }
  const std::string& name() const { return name_; }

  /// Neighbors of v in ascending neighbor order, each with the EdgeId of the
  /// connecting edge.
  std::span<const NeighborEntry> neighbors(NodeIndex v) const;
  int degree(NodeIndex v) const { return static_cast<int>(neighbors(v).size()); }

 private:
  friend Graph build_graph(int, std::vector<std::pair<int, int>>, Tensor,
                           std::vector<int>, std::optional<int>, std::string);

  int num_nodes_ = 0;
  std::vector<UndirectedEdge> edges_;
  Tensor features_;
  std::vector<int> node_labels_;
  std::optional<int> graph_label_;
  std::string name_;

  // CSR adjacency over both directions of every edge.
  std::vector<int> adj_offsets_;
  std::vector<NeighborEntry> adj_entries_;
};

/// Canonicalizing constructor. Pairs may arrive in any orientation and order;
/// they are stored sorted lexicographically with u < v. Errors (all E_RANGE /
/// E_SHAPE / E_FORMAT with the offending index in the message): node id out of
/// range, self-loop, duplicate edge, feature row count != num_nodes, label
/// count mismatch.
Graph build_graph(int num_nodes, std::vector<std::pair<int, int>> edges,
                  Tensor node_features, std::vector<int> node_labels = {},
                  std::optional<int> graph_label = std::nullopt,
                  std::string name = {});

/// Neighbor list of v (ascending). E_RANGE if v is out of range.
std::vector<NeighborEntry> neighbors(const Graph& g, NodeIndex v);

/// Per-edge multiplier in [0, 1], indexed by EdgeId; one weight covers both
/// propagation directions of its undirected edge. Immutable.
class EdgeWeights {
 public:
  EdgeWeights(const Graph& g, std::vector<double> values);

  double operator[](EdgeId id) const { return values_[static_cast<std::size_t>(id)]; }
  const std::vector<double>& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }

  /// Copy with weight `id` replaced (bounds- and range-checked).
  EdgeWeights with_weight(EdgeId id, double value) const;

  /// Sum of all weights (the ||x||_1 of the perturbation kernel).
  double l1_norm() const;

 private:
  std::vector<double> values_;
};

/// Constant weight vector of length |edges|. E_RANGE unless 0 <= value <= 1.
EdgeWeights uniform_weights(const Graph& g, double value);

// JSON graph file format: object with keys num_nodes, edges ([[u,v],...]),
// node_features ([[...],...]), optional node_labels, graph_label, name.
// Loading canonicalizes edge order; save/load round-trips bit-identically.
nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);

}  // namespace grex
