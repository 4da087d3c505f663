#include "grex/datasets.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <utility>

#include "grex/rng.hpp"

namespace grex {

namespace {

// Stream tag keeping the split shuffle disjoint from other substreams.
constexpr std::uint64_t kStreamSplit = 0x5eed5117ull;

std::map<std::pair<int, int>, EdgeId> edge_id_index(const Graph& g) {
  std::map<std::pair<int, int>, EdgeId> index;
  for (EdgeId id = 0; id < g.num_edges(); ++id) {
    const auto& e = g.edge(id);
    index[{e.u, e.v}] = id;
  }
  return index;
}

EdgeId lookup_edge(const std::map<std::pair<int, int>, EdgeId>& index, int u, int v) {
  if (u > v) std::swap(u, v);
  return index.at({u, v});
}

/// Barabasi-Albert preferential attachment: a path over the first
/// `attachment` nodes, then each new node links to `attachment` distinct
/// earlier nodes sampled proportionally to degree.
std::vector<std::pair<int, int>> barabasi_albert_edges(int num_nodes, int attachment,
                                                       Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  std::vector<int> repeated;  // node v appears deg(v) times
  const int m0 = attachment;
  for (int v = 0; v + 1 < m0; ++v) {
    edges.emplace_back(v, v + 1);
    repeated.push_back(v);
    repeated.push_back(v + 1);
  }
  for (int v = m0; v < num_nodes; ++v) {
    std::vector<int> chosen;
    while (static_cast<int>(chosen.size()) < attachment) {
      const int candidate =
          repeated[static_cast<std::size_t>(rng.uniform_int(repeated.size()))];
      if (std::find(chosen.begin(), chosen.end(), candidate) != chosen.end()) continue;
      chosen.push_back(candidate);
      edges.emplace_back(candidate, v);
      repeated.push_back(candidate);
    }
    for (int i = 0; i < attachment; ++i) repeated.push_back(v);
  }
  return edges;
}

}  // namespace

std::string task_name(Task t) {
  return t == Task::kNodeClassification ? "node-classification" : "graph-classification";
}

Task task_from_name(const std::string& name) {
  if (name == "node-classification") return Task::kNodeClassification;
  if (name == "graph-classification") return Task::kGraphClassification;
  throw Error("E_FORMAT", "unknown task '" + name + "'");
}

const Graph& LabeledDataset::graph_of(const TargetKey& key) const {
  if (key.graph < 0 || key.graph >= static_cast<int>(graphs.size())) {
    throw Error("E_RANGE", "target names graph " + std::to_string(key.graph) +
                               " in a dataset with " + std::to_string(graphs.size()) +
                               " graphs");
  }
  return graphs[static_cast<std::size_t>(key.graph)];
}

LabeledDataset gen_ba_shapes(std::uint64_t seed, const BaShapesParams& params) {
  if (params.base_nodes < params.attachment + 1 || params.attachment < 1) {
    throw Error("E_RANGE", "BA base needs more nodes than the attachment parameter");
  }
  if (params.num_houses < 0 || params.feature_dim < 1) {
    throw Error("E_RANGE", "bad BA-shapes parameters");
  }
  Rng rng(seed);
  std::vector<std::pair<int, int>> edges =
      barabasi_albert_edges(params.base_nodes, params.attachment, rng);

  const int total_nodes = params.base_nodes + 5 * params.num_houses;
  std::vector<int> labels(static_cast<std::size_t>(total_nodes), 0);
  // Per house: roof a, shoulders b c, base d e; a triangle roof on a square.
  struct House {
    int first;  // node id of the roof
  };
  std::vector<House> houses;
  for (int h = 0; h < params.num_houses; ++h) {
    const int a = params.base_nodes + 5 * h;
    const int b = a + 1, c = a + 2, d = a + 3, e = a + 4;
    edges.insert(edges.end(), {{a, b}, {a, c}, {b, c}, {b, d}, {c, e}, {d, e}});
    const int anchor = a + static_cast<int>(rng.uniform_int(5));
    const int base_target = static_cast<int>(rng.uniform_int(params.base_nodes));
    edges.emplace_back(anchor, base_target);
    labels[static_cast<std::size_t>(a)] = 1;
    labels[static_cast<std::size_t>(b)] = 2;
    labels[static_cast<std::size_t>(c)] = 2;
    labels[static_cast<std::size_t>(d)] = 3;
    labels[static_cast<std::size_t>(e)] = 3;
    houses.push_back({a});
  }

  LabeledDataset dataset;
  dataset.task = Task::kNodeClassification;
  dataset.name = "ba-shapes";
  dataset.graphs.push_back(build_graph(total_nodes, std::move(edges),
                                       Tensor::full(total_nodes, params.feature_dim, 1.0),
                                       std::move(labels), std::nullopt, "ba-shapes"));
  const Graph& g = dataset.graphs.front();
  const auto index = edge_id_index(g);
  for (const House& house : houses) {
    const int a = house.first;
    const std::vector<EdgeId> house_edges = {
        lookup_edge(index, a, a + 1),     lookup_edge(index, a, a + 2),
        lookup_edge(index, a + 1, a + 2), lookup_edge(index, a + 1, a + 3),
        lookup_edge(index, a + 2, a + 4), lookup_edge(index, a + 3, a + 4)};
    for (int offset = 0; offset < 5; ++offset) {
      dataset.ground_truth[{0, a + offset}] = house_edges;
    }
  }
  return dataset;
}

LabeledDataset gen_ring_dataset(int num_graphs, std::uint64_t seed,
                                const RingDatasetParams& params) {
  if (num_graphs < 2) throw Error("E_RANGE", "ring dataset needs at least 2 graphs");
  if (params.cycle_len < 3 || params.min_extra_nodes < 0 ||
      params.max_extra_nodes < params.min_extra_nodes) {
    throw Error("E_RANGE", "bad ring dataset parameters");
  }
  const int feature_dim = 4;  // one-hot of min(degree, 4)
  const int num_positive = (num_graphs + 1) / 2;

  LabeledDataset dataset;
  dataset.task = Task::kGraphClassification;
  dataset.name = "rings";
  for (int i = 0; i < num_graphs; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    const bool positive = i < num_positive;
    const int extra =
        params.min_extra_nodes +
        static_cast<int>(rng.uniform_int(
            static_cast<std::uint64_t>(params.max_extra_nodes - params.min_extra_nodes + 1)));
    std::vector<std::pair<int, int>> edges;
    int num_nodes = 0;
    if (positive) {
      num_nodes = params.cycle_len + extra;
      for (int v = 0; v < params.cycle_len; ++v) {
        edges.emplace_back(v, (v + 1) % params.cycle_len);
      }
      for (int v = params.cycle_len; v < num_nodes; ++v) {
        edges.emplace_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(v))), v);
      }
    } else {
      num_nodes = params.cycle_len + extra;  // matched size, no cycle
      for (int v = 1; v < num_nodes; ++v) {
        edges.emplace_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(v))), v);
      }
    }

    std::vector<int> degree(static_cast<std::size_t>(num_nodes), 0);
    for (const auto& [u, v] : edges) {
      ++degree[static_cast<std::size_t>(u)];
      ++degree[static_cast<std::size_t>(v)];
    }
    Tensor features(num_nodes, feature_dim);
    for (int v = 0; v < num_nodes; ++v) {
      features(v, std::min(degree[static_cast<std::size_t>(v)], feature_dim) - 1) = 1.0;
    }

    char name[32];
    std::snprintf(name, sizeof(name), "%s-%04d", positive ? "ring" : "tree", i);
    dataset.graphs.push_back(build_graph(num_nodes, std::move(edges), std::move(features),
                                         {}, positive ? 1 : 0, name));
    if (positive) {
      const auto index = edge_id_index(dataset.graphs.back());
      std::vector<EdgeId> cycle_edges;
      for (int v = 0; v < params.cycle_len; ++v) {
        cycle_edges.push_back(lookup_edge(index, v, (v + 1) % params.cycle_len));
      }
      std::sort(cycle_edges.begin(), cycle_edges.end());
      dataset.ground_truth[{i, -1}] = std::move(cycle_edges);
    }
  }
  return dataset;
}

Graph load_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("E_IO", "cannot open graph file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_FORMAT", "graph file '" + path.string() + "': " + e.what());
  }
  try {
    return graph_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), "graph file '" + path.string() + "': " + e.what());
  }
}

LabeledDataset load_dataset_dir(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "dataset.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error("E_IO", "cannot open manifest '" + manifest_path.string() + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_FORMAT", "manifest '" + manifest_path.string() + "': " + e.what());
  }

  LabeledDataset dataset;
  try {
    dataset.task = task_from_name(manifest.at("task").get<std::string>());
    dataset.name = manifest.value("name", std::string{});
    for (const auto& entry : manifest.at("graphs")) {
      dataset.graphs.push_back(load_graph_file(dir / entry.get<std::string>()));
    }
    if (dataset.task == Task::kNodeClassification && dataset.graphs.size() != 1) {
      throw Error("E_FORMAT", "node-classification dataset must list exactly one graph");
    }
    if (manifest.contains("ground_truth")) {
      const auto gt_path = dir / manifest["ground_truth"].get<std::string>();
      std::ifstream gt_in(gt_path);
      if (!gt_in) throw Error("E_IO", "cannot open ground truth '" + gt_path.string() + "'");
      nlohmann::json gt;
      gt_in >> gt;
      for (const auto& record : gt) {
        TargetKey key;
        key.graph = record.at("graph").get<int>();
        key.node = record.value("node", -1);
        auto edges = record.at("edges").get<std::vector<EdgeId>>();
        const Graph& g = dataset.graph_of(key);
        for (EdgeId id : edges) {
          if (id < 0 || id >= g.num_edges()) {
            throw Error("E_FORMAT", "ground-truth edge id " + std::to_string(id) +
                                        " invalid for graph " + std::to_string(key.graph));
          }
        }
        dataset.ground_truth[key] = std::move(edges);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_FORMAT", "manifest '" + manifest_path.string() + "': " + e.what());
  }
  return dataset;
}

void save_dataset_dir(const std::filesystem::path& dir, const LabeledDataset& dataset) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("E_IO", "cannot create directory '" + dir.string() + "'");

  nlohmann::ordered_json manifest;
  manifest["task"] = task_name(dataset.task);
  manifest["name"] = dataset.name;
  auto graph_files = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < dataset.graphs.size(); ++i) {
    char file[32];
    std::snprintf(file, sizeof(file), "g%04zu.json", i);
    graph_files.push_back(file);
    std::ofstream out(dir / file);
    if (!out) throw Error("E_IO", "cannot write graph file in '" + dir.string() + "'");
    out << graph_to_json(dataset.graphs[i]).dump(2) << '\n';
  }
  manifest["graphs"] = std::move(graph_files);

  if (!dataset.ground_truth.empty()) {
    auto gt = nlohmann::ordered_json::array();
    for (const auto& [key, edges] : dataset.ground_truth) {
      nlohmann::ordered_json record;
      record["graph"] = key.graph;
      if (key.node >= 0) record["node"] = key.node;
      record["edges"] = edges;
      gt.push_back(std::move(record));
    }
    std::ofstream out(dir / "ground_truth.json");
    if (!out) throw Error("E_IO", "cannot write ground truth in '" + dir.string() + "'");
    out << gt.dump(2) << '\n';
    manifest["ground_truth"] = "ground_truth.json";
  }

  std::ofstream out(dir / "dataset.json");
  if (!out) throw Error("E_IO", "cannot write manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << '\n';
}

TrainTestSplit split_units(const LabeledDataset& dataset, double train_fraction,
                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error("E_RANGE", "train fraction must lie in (0,1)");
  }
  const int n = dataset.task == Task::kNodeClassification
                    ? dataset.graphs.front().num_nodes()
                    : static_cast<int>(dataset.graphs.size());
  if (n < 2) throw Error("E_RANGE", "need at least two units to split");

  std::vector<int> units(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) units[static_cast<std::size_t>(i)] = i;
  Rng rng(Rng::derive(seed, kStreamSplit));
  for (int i = n - 1; i > 0; --i) {  // Fisher-Yates
    const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(units[static_cast<std::size_t>(i)], units[static_cast<std::size_t>(j)]);
  }
  int n_train = static_cast<int>(std::lround(train_fraction * n));
  n_train = std::clamp(n_train, 1, n - 1);

  TrainTestSplit split;
  split.train.assign(units.begin(), units.begin() + n_train);
  split.test.assign(units.begin() + n_train, units.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace grex
