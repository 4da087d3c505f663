#include "grex/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace grex {

const UndirectedEdge& Graph::edge(EdgeId id) const {
  if (id < 0 || id >= num_edges()) {
    throw Error("E_RANGE", "edge id " + std::to_string(id) + " outside 0.." +
                               std::to_string(num_edges() - 1));
  }
  return edges_[static_cast<std::size_t>(id)];
}

std::span<const NeighborEntry> Graph::neighbors(NodeIndex v) const {
  if (v < 0 || v >= num_nodes_) {
    throw Error("E_RANGE", "node id " + std::to_string(v) + " out of range (graph has " +
                               std::to_string(num_nodes_) + " nodes)");
  }
  const auto begin = static_cast<std::size_t>(adj_offsets_[static_cast<std::size_t>(v)]);
  const auto end = static_cast<std::size_t>(adj_offsets_[static_cast<std::size_t>(v) + 1]);
  return {adj_entries_.data() + begin, end - begin};
}

Graph build_graph(int num_nodes, std::vector<std::pair<int, int>> edges,
                  Tensor node_features, std::vector<int> node_labels,
                  std::optional<int> graph_label, std::string name) {
  if (num_nodes < 0) throw Error("E_RANGE", "negative node count");
  if (node_features.rows != num_nodes) {
    throw Error("E_SHAPE", "node_features has " + std::to_string(node_features.rows) +
                               " rows for " + std::to_string(num_nodes) + " nodes");
  }
  if (num_nodes > 0 && node_features.cols < 1) {
    throw Error("E_SHAPE", "feature_dim must be >= 1");
  }
  if (!node_labels.empty() && static_cast<int>(node_labels.size()) != num_nodes) {
    throw Error("E_SHAPE", "node_labels has " + std::to_string(node_labels.size()) +
                               " entries for " + std::to_string(num_nodes) + " nodes");
  }
  detail::check_finite(node_features, "build_graph(node_features)");

  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto& [u, v] = edges[i];
    if (u == v) {
      throw Error("E_RANGE", "self-loop at node " + std::to_string(u) +
                                 " (edge index " + std::to_string(i) + ")");
    }
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw Error("E_RANGE", "node id out of range in edge (" + std::to_string(u) + "," +
                                 std::to_string(v) + ") at index " + std::to_string(i));
    }
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  const auto dup = std::adjacent_find(edges.begin(), edges.end());
  if (dup != edges.end()) {
    throw Error("E_RANGE", "duplicate edge (" + std::to_string(dup->first) + "," +
                               std::to_string(dup->second) + ")");
  }

  Graph g;
  g.num_nodes_ = num_nodes;
  g.edges_.reserve(edges.size());
  for (const auto& [u, v] : edges) g.edges_.push_back({u, v});
  g.features_ = node_features.detached();
  g.node_labels_ = std::move(node_labels);
  g.graph_label_ = graph_label;
  g.name_ = std::move(name);

  // CSR over both directions, entries per node sorted by neighbor id.
  std::vector<int> deg(static_cast<std::size_t>(num_nodes), 0);
  for (const auto& e : g.edges_) {
    ++deg[static_cast<std::size_t>(e.u)];
    ++deg[static_cast<std::size_t>(e.v)];
  }
  g.adj_offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  for (int v = 0; v < num_nodes; ++v) {
    g.adj_offsets_[static_cast<std::size_t>(v) + 1] =
        g.adj_offsets_[static_cast<std::size_t>(v)] + deg[static_cast<std::size_t>(v)];
  }
  g.adj_entries_.resize(2 * g.edges_.size());
  std::vector<int> cursor(g.adj_offsets_.begin(), g.adj_offsets_.end() - 1);
  for (EdgeId id = 0; id < g.num_edges(); ++id) {
    const auto& e = g.edges_[static_cast<std::size_t>(id)];
    g.adj_entries_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(e.u)]++)] = {e.v, id};
    g.adj_entries_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(e.v)]++)] = {e.u, id};
  }
  for (int v = 0; v < num_nodes; ++v) {
    auto begin = g.adj_entries_.begin() + g.adj_offsets_[static_cast<std::size_t>(v)];
    auto end = g.adj_entries_.begin() + g.adj_offsets_[static_cast<std::size_t>(v) + 1];
    std::sort(begin, end, [](const NeighborEntry& a, const NeighborEntry& b) {
      return a.neighbor < b.neighbor;
    });
  }
  return g;
}

std::vector<NeighborEntry> neighbors(const Graph& g, NodeIndex v) {
  auto span = g.neighbors(v);
  return {span.begin(), span.end()};
}

EdgeWeights::EdgeWeights(const Graph& g, std::vector<double> values)
    : values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != g.num_edges()) {
    throw Error("E_SHAPE", "edge weight vector of length " + std::to_string(values_.size()) +
                               " for a graph with " + std::to_string(g.num_edges()) +
                               " edges");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double w = values_[i];
    if (!(w >= 0.0 && w <= 1.0)) {
      throw Error("E_RANGE", "edge weight " + std::to_string(w) + " at edge " +
                                 std::to_string(i) + " outside [0,1]");
    }
  }
}

EdgeWeights EdgeWeights::with_weight(EdgeId id, double value) const {
  if (id < 0 || id >= size()) {
    throw Error("E_RANGE", "edge id " + std::to_string(id) + " outside 0.." +
                               std::to_string(size() - 1));
  }
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error("E_RANGE", "edge weight " + std::to_string(value) + " outside [0,1]");
  }
  EdgeWeights copy = *this;
  copy.values_[static_cast<std::size_t>(id)] = value;
  return copy;
}

double EdgeWeights::l1_norm() const {
  double acc = 0.0;
  for (double v : values_) acc += v;
  return acc;
}

EdgeWeights uniform_weights(const Graph& g, double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error("E_RANGE", "uniform weight " + std::to_string(value) + " outside [0,1]");
  }
  return EdgeWeights(g, std::vector<double>(static_cast<std::size_t>(g.num_edges()), value));
}

nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json j;
  j["num_nodes"] = g.num_nodes();
  auto edges = nlohmann::json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v});
  j["edges"] = std::move(edges);
  auto feats = nlohmann::json::array();
  for (int r = 0; r < g.num_nodes(); ++r) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < g.feature_dim(); ++c) row.push_back(g.node_features()(r, c));
    feats.push_back(std::move(row));
  }
  j["node_features"] = std::move(feats);
  if (g.has_node_labels()) j["node_labels"] = g.node_labels();
  if (g.graph_label()) j["graph_label"] = *g.graph_label();
  if (!g.name().empty()) j["name"] = g.name();
  return j;
}

Graph graph_from_json(const nlohmann::json& j) {
  try {
    const int num_nodes = j.at("num_nodes").get<int>();
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) {
        throw Error("E_FORMAT", "edge entry is not a [u,v] pair");
      }
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    const auto& feats = j.at("node_features");
    if (static_cast<int>(feats.size()) != num_nodes) {
      throw Error("E_FORMAT", "node_features has " + std::to_string(feats.size()) +
                                  " rows for " + std::to_string(num_nodes) + " nodes");
    }
    const int dim = num_nodes > 0 ? static_cast<int>(feats.at(0).size()) : 0;
    Tensor features(num_nodes, dim);
    for (int r = 0; r < num_nodes; ++r) {
      const auto& row = feats.at(static_cast<std::size_t>(r));
      if (static_cast<int>(row.size()) != dim) {
        throw Error("E_FORMAT", "node_features row " + std::to_string(r) +
                                    " has inconsistent length");
      }
      for (int c = 0; c < dim; ++c) features(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    std::vector<int> labels;
    if (j.contains("node_labels")) labels = j["node_labels"].get<std::vector<int>>();
    std::optional<int> graph_label;
    if (j.contains("graph_label")) graph_label = j["graph_label"].get<int>();
    std::string name;
    if (j.contains("name")) name = j["name"].get<std::string>();
    return build_graph(num_nodes, std::move(edges), std::move(features), std::move(labels),
                       graph_label, std::move(name));
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_FORMAT", std::string("malformed graph JSON: ") + e.what());
  }
}

}  // namespace grex
