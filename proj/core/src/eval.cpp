#include "grex/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <iomanip>
#include <ostream>
#include <set>

#include "grex/parallel.hpp"
#include "grex/rng.hpp"

namespace grex {

double recall_at_k(const Explanation& e, const std::vector<EdgeId>& ground_truth, int k) {
  if (ground_truth.empty()) throw Error("E_RANGE", "recall against an empty ground truth");
  const std::vector<EdgeId> top = top_k_edges(e, k);
  const std::set<EdgeId> truth(ground_truth.begin(), ground_truth.end());
  int hits = 0;
  for (EdgeId id : top) hits += truth.count(id) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<double> removal_curve(const GraphModel& model, const Graph& g,
                                  const Explanation& e, const TargetSpec& target, int k,
                                  ForwardCounter* counter) {
  if (k < 1) throw Error("E_RANGE", "removal curve needs K >= 1");
  if (g.num_edges() < k) {
    throw Error("E_RANGE", "removal curve of length " + std::to_string(k) +
                               " on a graph with " + std::to_string(g.num_edges()) +
                               " edges");
  }
  const TargetSpec resolved = resolve_target(model, g, target, counter);
  const Tensor input_cache = model.input_product(g);
  ForwardHooks hooks;
  hooks.counter = counter;
  hooks.input_cache = &input_cache;

  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(k) + 1);
  curve.push_back(predict_scalar(model, g, uniform_weights(g, 1.0), resolved, hooks).value());
  const std::vector<EdgeId> order = top_k_edges(e, k);
  EdgeWeights ew = uniform_weights(g, 1.0);
  for (int step = 0; step < k; ++step) {
    ew = ew.with_weight(order[static_cast<std::size_t>(step)], 0.0);
    curve.push_back(predict_scalar(model, g, ew, resolved, hooks).value());
  }
  return curve;
}

double auc_edge(const std::vector<double>& curve) {
  if (curve.size() < 2) throw Error("E_RANGE", "AUC needs a curve with K >= 1 steps");
  const double y0 = curve.front();
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    area += ((y0 - curve[k - 1]) + (y0 - curve[k])) / 2.0;
  }
  return area;
}

// ---- report ----------------------------------------------------------------

namespace {

std::string fmt_double(double v) { return nlohmann::json(v).dump(); }

}  // namespace

void EvalReport::append(EvalReport other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  details.insert(details.end(), other.details.begin(), other.details.end());
}

void EvalReport::write_csv(std::ostream& out, bool include_wall_time) const {
  out << "method,dataset,task,metric,value,seed,forward_passes,wall_time_ms\n";
  for (const EvalRow& row : rows) {
    out << method_name(row.method) << ',' << row.dataset << ',' << task_name(row.task)
        << ',' << row.metric << ',' << fmt_double(row.value) << ',' << row.seed << ','
        << fmt_double(row.forward_passes) << ','
        << fmt_double(include_wall_time ? row.wall_time_ms : 0.0) << '\n';
  }
}

void EvalReport::print_summary(std::ostream& out) const {
  if (rows.empty()) {
    out << "(empty report)\n";
    return;
  }
  std::vector<std::string> datasets;
  std::vector<Method> methods;
  for (const EvalRow& row : rows) {
    if (std::find(datasets.begin(), datasets.end(), row.dataset) == datasets.end()) {
      datasets.push_back(row.dataset);
    }
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
      methods.push_back(row.method);
    }
  }
  out << "metric: " << rows.front().metric << " (mean over seeds)\n";
  out << std::left << std::setw(10) << "method";
  for (const auto& d : datasets) out << std::setw(14) << d;
  out << std::setw(12) << "fwd/target" << std::setw(10) << "ms" << '\n';
  for (Method m : methods) {
    out << std::setw(10) << method_name(m);
    double passes = 0.0, ms = 0.0;
    int cells = 0;
    for (const auto& d : datasets) {
      double sum = 0.0;
      int count = 0;
      for (const EvalRow& row : rows) {
        if (row.method != m || row.dataset != d) continue;
        sum += row.value;
        ++count;
        passes += row.forward_passes;
        ms += row.wall_time_ms;
        ++cells;
      }
      if (count > 0) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", sum / count);
        out << std::setw(14) << buf;
      } else {
        out << std::setw(14) << "-";
      }
    }
    if (cells > 0) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f", passes / cells);
      out << std::setw(12) << buf;
      std::snprintf(buf, sizeof(buf), "%.1f", ms / cells);
      out << std::setw(10) << buf;
    }
    out << '\n';
  }
}

// ---- benchmark ----------------------------------------------------------------

namespace {

constexpr std::uint64_t kStreamTargets = 0x7a26e75ull;
constexpr std::uint64_t kStreamCellBase = 0x6ce11ull;

struct BenchTarget {
  TargetKey key;
  TargetSpec spec;  // class resolved
};

/// Number of distinct edges with an endpoint within `radius - 1` hops of v,
/// i.e. edges that can carry a message into v's receptive field.
int receptive_edge_count(const Graph& g, int v, int radius) {
  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes()), -1);
  std::deque<int> queue{v};
  dist[static_cast<std::size_t>(v)] = 0;
  std::vector<char> seen(static_cast<std::size_t>(g.num_edges()), 0);
  int count = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (const auto& nb : g.neighbors(u)) {
      if (!seen[static_cast<std::size_t>(nb.edge)]) {
        seen[static_cast<std::size_t>(nb.edge)] = 1;
        ++count;
      }
      if (dist[static_cast<std::size_t>(nb.neighbor)] == -1 &&
          dist[static_cast<std::size_t>(u)] + 1 <= radius - 1) {
        dist[static_cast<std::size_t>(nb.neighbor)] = dist[static_cast<std::size_t>(u)] + 1;
        queue.push_back(nb.neighbor);
      }
    }
  }
  return count;
}

std::vector<BenchTarget> select_targets(const GraphModel& model,
                                        const LabeledDataset& dataset,
                                        const BenchmarkSpec& spec, std::uint64_t seed) {
  std::vector<BenchTarget> targets;
  if (dataset.task == Task::kNodeClassification) {
    const Graph& g = dataset.graphs.front();
    const std::vector<int> predicted = argmax_rows(model.logits(g, uniform_weights(g, 1.0)));
    if (spec.metric == MetricKind::kRecall) {
      for (const auto& [key, edges] : dataset.ground_truth) {
        const int cls = predicted[static_cast<std::size_t>(key.node)];
        if (cls == 0) continue;  // house-node rule: explain non-base predictions
        targets.push_back({key, TargetSpec{key.node, cls}});
      }
    } else {
      for (int v = 0; v < g.num_nodes(); ++v) {
        if (receptive_edge_count(g, v, model.num_steps()) < spec.removal_steps) continue;
        targets.push_back({TargetKey{0, v},
                           TargetSpec{v, predicted[static_cast<std::size_t>(v)]}});
      }
    }
  } else {
    if (spec.metric == MetricKind::kRecall) {
      for (const auto& [key, edges] : dataset.ground_truth) {
        const Graph& g = dataset.graph_of(key);
        const int cls = argmax_rows(model.logits(g, uniform_weights(g, 1.0)))[0];
        targets.push_back({key, TargetSpec{-1, cls}});
      }
    } else {
      for (int gi = 0; gi < static_cast<int>(dataset.graphs.size()); ++gi) {
        const Graph& g = dataset.graphs[static_cast<std::size_t>(gi)];
        if (g.num_edges() < spec.removal_steps) continue;
        const int cls = argmax_rows(model.logits(g, uniform_weights(g, 1.0)))[0];
        targets.push_back({TargetKey{gi, -1}, TargetSpec{-1, cls}});
      }
    }
  }

  if (static_cast<int>(targets.size()) > spec.max_targets) {
    Rng rng(Rng::derive(seed, kStreamTargets));
    for (std::size_t i = 0; i < targets.size(); ++i) {  // partial Fisher-Yates
      if (static_cast<int>(i) >= spec.max_targets) break;
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_int(targets.size() - i));
      std::swap(targets[i], targets[j]);
    }
    targets.resize(static_cast<std::size_t>(spec.max_targets));
    std::sort(targets.begin(), targets.end(),
              [](const BenchTarget& a, const BenchTarget& b) { return a.key < b.key; });
  }
  return targets;
}

}  // namespace

EvalReport run_benchmark(const GraphModel& model, const LabeledDataset& dataset,
                         const BenchmarkSpec& spec) {
  if (model.task() != dataset.task) {
    throw Error("E_TASK", "model performs " + task_name(model.task()) + " but dataset '" +
                              dataset.name + "' is " + task_name(dataset.task));
  }
  if (spec.methods.empty()) throw Error("E_USAGE", "empty method list");
  if (spec.seeds.empty()) throw Error("E_USAGE", "empty seed list");
  if (spec.k < 1 || spec.removal_steps < 1 || spec.max_targets < 1) {
    throw Error("E_RANGE", "benchmark spec values must be positive");
  }

  const std::string metric_label =
      spec.metric == MetricKind::kRecall
          ? "recall@" + std::to_string(spec.k)
          : "auc_edge@" + std::to_string(spec.removal_steps);

  EvalReport report;
  for (const std::uint64_t seed : spec.seeds) {
    const std::vector<BenchTarget> targets = select_targets(model, dataset, spec, seed);
    if (targets.empty()) {
      throw Error("E_STATE", "no eligible explanation targets for dataset '" +
                                 dataset.name + "'");
    }
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
      const Method method = spec.methods[mi];
      const std::uint64_t cell_seed =
          Rng::derive(seed, kStreamCellBase + static_cast<std::uint64_t>(method));
      ForwardCounter counter;
      std::vector<double> values(targets.size(), 0.0);
      const auto t0 = std::chrono::steady_clock::now();

      parallel_for(targets.size(), spec.jobs, [&](std::size_t ti) {
        const BenchTarget& bt = targets[ti];
        const Graph& g = dataset.graph_of(bt.key);
        Explanation e;
        switch (method) {
          case Method::kLime: {
            LimeConfig c = spec.lime;
            c.seed = Rng::derive(cell_seed, ti);
            c.jobs = 1;
            e = explain_lime(model, g, bt.spec, c, &counter);
            break;
          }
          case Method::kSaliency:
            e = explain_saliency(model, g, bt.spec, &counter);
            break;
          case Method::kGradCam:
            e = explain_gradcam(model, g, bt.spec, &counter);
            break;
          case Method::kRemoval:
            e = explain_removal(model, g, bt.spec, &counter, 1);
            break;
          case Method::kRandom:
            e = explain_random(g, Rng::derive(cell_seed, ti));
            break;
        }
        if (spec.metric == MetricKind::kRecall) {
          values[ti] = recall_at_k(e, dataset.ground_truth.at(bt.key), spec.k);
        } else {
          // Curve forwards are protocol cost, not explainer cost; keep them
          // out of the counter so the column stays the method's price.
          values[ti] = auc_edge(removal_curve(model, g, e, bt.spec, spec.removal_steps));
        }
      });

      const auto t1 = std::chrono::steady_clock::now();
      double mean = 0.0;
      for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        mean += values[ti];
        report.details.push_back({method, seed, targets[ti].key, values[ti]});
      }
      mean /= static_cast<double>(targets.size());

      EvalRow row;
      row.method = method;
      row.dataset = dataset.name;
      row.task = dataset.task;
      row.metric = metric_label;
      row.value = mean;
      row.seed = seed;
      row.forward_passes =
          static_cast<double>(counter.count()) / static_cast<double>(targets.size());
      row.wall_time_ms =
          std::chrono::duration<double, std::milli>(t1 - t0).count();
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace grex
