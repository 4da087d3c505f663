#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "grex/datasets.hpp"
#include "grex/explain.hpp"
#include "grex/models.hpp"

namespace grex {

/// Fraction of ground-truth edges among the k highest-importance edges.
/// E_RANGE on an empty ground-truth set.
double recall_at_k(const Explanation& e, const std::vector<EdgeId>& ground_truth, int k);

/// Cumulative removal curve y_0..y_K: y_k is the target logit with the top-k
/// edges of `e` at weight zero (set semantics, nested by construction).
/// E_RANGE when the graph has fewer than K edges. K+1 forwards on `counter`.
std::vector<double> removal_curve(const GraphModel& model, const Graph& g,
                                  const Explanation& e, const TargetSpec& target, int k = 5,
                                  ForwardCounter* counter = nullptr);

/// Trapezoidal area under the cumulative drop curve:
///   sum_{k=1..K} ((y0 - y_{k-1}) + (y0 - y_k)) / 2.
double auc_edge(const std::vector<double>& curve);

enum class MetricKind { kRecall, kAuc };

struct EvalRow {
  Method method = Method::kRandom;
  std::string dataset;
  Task task = Task::kNodeClassification;
  std::string metric;  // "recall@k" or "auc_edge@K"
  double value = 0.0;
  std::uint64_t seed = 0;
  double forward_passes = 0.0;  // mean explainer passes per target
  double wall_time_ms = 0.0;
};

struct TargetDetail {
  Method method = Method::kRandom;
  std::uint64_t seed = 0;
  TargetKey target;
  double value = 0.0;
};

/// Benchmark output: one row per (method, dataset, metric, seed) plus
/// per-target detail records. CSV columns:
///   method,dataset,task,metric,value,seed,forward_passes,wall_time_ms
/// wall_time_ms is written as 0 unless include_wall_time is set, keeping the
/// file byte-reproducible; measured times always appear in the summary.
struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<TargetDetail> details;

  void append(EvalReport other);
  void write_csv(std::ostream& out, bool include_wall_time = false) const;
  /// Table with methods as rows and datasets as columns (mean over seeds).
  void print_summary(std::ostream& out) const;
};

struct BenchmarkSpec {
  std::vector<Method> methods{Method::kLime, Method::kSaliency, Method::kGradCam,
                              Method::kRemoval, Method::kRandom};
  MetricKind metric = MetricKind::kRecall;
  int k = 5;              // recall cut-off
  int removal_steps = 5;  // K of the removal curve
  std::vector<std::uint64_t> seeds{0};
  int max_targets = 100;  // seeded sample cap on eligible targets
  int jobs = 1;
  LimeConfig lime;  // per-target seeds derive from the cell seed
};

/// Runs every (seed, method) cell of the spec against one model/dataset pair.
/// Recall targets are the dataset's ground-truth keys (node tasks keep only
/// nodes the model predicts non-0, mirroring the house-node rule); AUC
/// targets are a seeded sample of nodes (or graphs) whose receptive field
/// holds at least removal_steps edges, explained at their predicted class.
EvalReport run_benchmark(const GraphModel& model, const LabeledDataset& dataset,
                         const BenchmarkSpec& spec);

}  // namespace grex
