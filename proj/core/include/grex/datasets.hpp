#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "grex/graph.hpp"

namespace grex {

enum class Task {
  kNodeClassification,   // one graph, per-node labels
  kGraphClassification,  // many graphs, per-graph labels
};

std::string task_name(Task t);
Task task_from_name(const std::string& name);

/// Key of an explanation target inside a dataset: a (graph, node) pair for
/// node tasks (graph is always 0 there) or a graph index for graph tasks
/// (node = -1). Ordered so ground-truth maps iterate deterministically.
struct TargetKey {
  int graph = 0;
  int node = -1;
  auto operator<=>(const TargetKey&) const = default;
};

/// A set of graphs with labels and, when known, ground-truth explanation
/// edges per target.
struct LabeledDataset {
  Task task = Task::kNodeClassification;
  std::string name;
  std::vector<Graph> graphs;
  std::map<TargetKey, std::vector<EdgeId>> ground_truth;

  const Graph& graph_of(const TargetKey& key) const;
};

/// BA-shapes style synthetic node-classification graph: a Barabasi-Albert
/// base with house motifs attached. Node labels: 0 base, 1 roof, 2 shoulder,
/// 3 house base. Features are constant ones. Ground truth for every house
/// node is its house's six edges.
struct BaShapesParams {
  int base_nodes = 300;
  int num_houses = 80;
  int attachment = 5;   // edges added per new node in the BA phase
  int feature_dim = 8;  // constant all-ones features
};
LabeledDataset gen_ba_shapes(std::uint64_t seed, const BaShapesParams& params = {});

/// Balanced binary graph-classification set: positives contain exactly one
/// 6-cycle with pendant trees attached, negatives are random trees of matched
/// size. Features are a one-hot of min(degree, 4). Ground truth for each
/// positive is its six cycle edges.
struct RingDatasetParams {
  int min_extra_nodes = 0;  // pendant nodes attached to the cycle
  int max_extra_nodes = 6;
  int cycle_len = 6;
};
LabeledDataset gen_ring_dataset(int num_graphs, std::uint64_t seed,
                                const RingDatasetParams& params = {});

/// Loads one graph from a JSON file (see graph.hpp for the format). Errors
/// carry the file name and, for parse failures, the byte position.
Graph load_graph_file(const std::filesystem::path& path);

// Dataset directory layout: a manifest `dataset.json` with keys
//   task          "node-classification" | "graph-classification"
//   name          optional dataset tag
//   graphs        list of graph file paths relative to the directory
//   ground_truth  optional path of a ground-truth JSON file
// The ground-truth file is a list of {graph, node?, edges:[...]} records.
LabeledDataset load_dataset_dir(const std::filesystem::path& dir);
void save_dataset_dir(const std::filesystem::path& dir, const LabeledDataset& dataset);

/// Deterministic train/test split of the dataset's target units (node ids
/// for node tasks, graph indices for graph tasks).
struct TrainTestSplit {
  std::vector<int> train;
  std::vector<int> test;
};
TrainTestSplit split_units(const LabeledDataset& dataset, double train_fraction,
                           std::uint64_t seed);

}  // namespace grex
