#include "commands.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

#include "dot_export.hpp"
#include "grex/datasets.hpp"
#include "grex/eval.hpp"
#include "grex/explain.hpp"
#include "grex/models.hpp"

namespace grex::cli {

namespace {

void ensure_out_dir(const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error("E_IO", "cannot create output directory '" + out.string() + "'");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("E_IO", "cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

void cmd_gen_data(const GenDataOptions& options) {
  ensure_out_dir(options.out);
  LabeledDataset dataset;
  if (options.dataset == "ba-shapes") {
    dataset = gen_ba_shapes(options.seed);
  } else if (options.dataset == "rings") {
    dataset = gen_ring_dataset(options.num_graphs, options.seed);
  } else {
    throw Error("E_USAGE", "unknown dataset name '" + options.dataset +
                               "' (expected ba-shapes|rings)");
  }
  save_dataset_dir(options.out, dataset);
  std::cout << "wrote " << dataset.graphs.size() << " graph(s) to " << options.out.string()
            << " (" << task_name(dataset.task) << ", " << dataset.ground_truth.size()
            << " ground-truth targets)\n";
}

void cmd_train(const TrainOptions& options) {
  ensure_out_dir(options.out);
  const LabeledDataset dataset = load_dataset_dir(options.data);

  ModelSpec spec;
  TrainConfig config;
  if (options.model == "gcn") {
    spec.arch = Arch::kGcn;
    spec.hidden_dim = 32;
    spec.depth = 3;
    config.learning_rate = 0.01;
    config.epochs = 400;
  } else if (options.model == "ggnn") {
    spec.arch = Arch::kGgnn;
    spec.hidden_dim = 16;
    spec.depth = 4;
    config.learning_rate = 0.1;
    config.epochs = 500;
  } else {
    throw Error("E_USAGE", "unknown model '" + options.model + "' (expected gcn|ggnn)");
  }
  if (options.hidden > 0) spec.hidden_dim = options.hidden;
  if (options.depth > 0) spec.depth = options.depth;
  if (options.lr > 0.0) config.learning_rate = options.lr;
  if (options.epochs >= 0) config.epochs = options.epochs;
  config.train_fraction = options.train_fraction;
  config.seed = options.seed;

  const TrainedModel result = train(spec, dataset, config);
  save_checkpoint(options.out / "model.ckpt.json", *result.model,
                  {options.seed, dataset.name});

  nlohmann::ordered_json metrics;
  metrics["train_accuracy"] = result.metrics.train_accuracy;
  metrics["test_accuracy"] = result.metrics.test_accuracy;
  metrics["loss_curve"] = result.metrics.loss_curve;
  write_text(options.out / "metrics.json", metrics.dump(2) + "\n");

  std::cout << "trained " << options.model << " on '" << dataset.name << "': train acc "
            << result.metrics.train_accuracy << ", test acc "
            << result.metrics.test_accuracy << '\n';
}

void cmd_explain(const ExplainOptions& options) {
  ensure_out_dir(options.out);
  const LoadedCheckpoint checkpoint = load_checkpoint(options.checkpoint);
  const LabeledDataset dataset = load_dataset_dir(options.data);
  const GraphModel& model = *checkpoint.model;
  if (model.task() != dataset.task) {
    throw Error("E_TASK", "checkpoint performs " + task_name(model.task()) +
                              " but dataset '" + dataset.name + "' is " +
                              task_name(dataset.task));
  }

  int graph_index = 0;
  TargetSpec target;
  if (dataset.task == Task::kNodeClassification) {
    target.node = options.target;
  } else {
    graph_index = options.target;
    if (graph_index < 0 || graph_index >= static_cast<int>(dataset.graphs.size())) {
      throw Error("E_RANGE", "graph index " + std::to_string(graph_index) +
                                 " outside a dataset of " +
                                 std::to_string(dataset.graphs.size()) + " graphs");
    }
    target.node = -1;
  }
  if (options.target_class >= 0) target.class_id = options.target_class;
  const Graph& graph = dataset.graphs[static_cast<std::size_t>(graph_index)];

  // Resolve "predicted" outside the counter: the logged count is the
  // method's own cost.
  const TargetSpec resolved = resolve_target(model, graph, target);
  const Method method = method_from_name(options.method);
  ForwardCounter counter;
  Explanation explanation;
  switch (method) {
    case Method::kLime: {
      LimeConfig config;
      config.p = options.p;
      config.m = options.m;
      config.sigma = options.sigma;
      config.lambda = options.lambda;
      config.seed = options.seed;
      config.binary_perturbation = options.binary_perturbation;
      config.jobs = options.jobs;
      explanation = explain_lime(model, graph, resolved, config, &counter);
      break;
    }
    case Method::kSaliency:
      explanation = explain_saliency(model, graph, resolved, &counter);
      break;
    case Method::kGradCam:
      explanation = explain_gradcam(model, graph, resolved, &counter);
      break;
    case Method::kRemoval:
      explanation = explain_removal(model, graph, resolved, &counter, options.jobs);
      break;
    case Method::kRandom:
      explanation = explain_random(graph, options.seed);
      break;
  }

  ExplanationRecord record;
  record.explanation = std::move(explanation);
  record.dataset = dataset.name;
  record.graph_name = graph.name();
  record.graph_index = graph_index;
  save_explanation(options.out / "explanation.json", record);
  write_explanation_csv(options.out / "explanation.csv", record.explanation, graph);

  std::cout << "method: " << method_name(method) << '\n';
  std::cout << "target: " << (dataset.task == Task::kNodeClassification ? "node " : "graph ")
            << options.target << " class " << *record.explanation.target.class_id << '\n';
  std::cout << "forward passes: " << counter.count() << '\n';
}

void cmd_evaluate(const EvaluateOptions& options) {
  ensure_out_dir(options.out);
  const LoadedCheckpoint checkpoint = load_checkpoint(options.checkpoint);
  const LabeledDataset dataset = load_dataset_dir(options.data);

  BenchmarkSpec spec;
  spec.methods.clear();
  for (const std::string& name : options.methods) {
    spec.methods.push_back(method_from_name(name));
  }
  if (options.metric == "recall") {
    spec.metric = MetricKind::kRecall;
  } else if (options.metric == "auc") {
    spec.metric = MetricKind::kAuc;
  } else {
    throw Error("E_USAGE", "unknown metric '" + options.metric + "' (expected recall|auc)");
  }
  spec.k = options.k;
  spec.removal_steps = options.removal_steps;
  spec.seeds = options.seeds;
  spec.max_targets = options.max_targets;
  spec.jobs = options.jobs;
  spec.lime.m = options.lime_m;

  const EvalReport report = run_benchmark(*checkpoint.model, dataset, spec);
  std::ofstream csv(options.out / "report.csv");
  if (!csv) throw Error("E_IO", "cannot write report in '" + options.out.string() + "'");
  report.write_csv(csv, options.timings);
  report.print_summary(std::cout);
}

void cmd_export_dot(const ExportDotOptions& options) {
  ensure_out_dir(options.out);
  const ExplanationRecord record = load_explanation(options.explanation);
  const LabeledDataset dataset = load_dataset_dir(options.data);
  if (record.graph_index < 0 ||
      record.graph_index >= static_cast<int>(dataset.graphs.size())) {
    throw Error("E_RANGE", "explanation names graph " + std::to_string(record.graph_index) +
                               " outside a dataset of " +
                               std::to_string(dataset.graphs.size()) + " graphs");
  }
  const Graph& graph = dataset.graphs[static_cast<std::size_t>(record.graph_index)];
  write_text(options.out / "graph.dot",
             explanation_to_dot(graph, record.explanation, options.top_k));
  std::cout << "wrote " << (options.out / "graph.dot").string() << '\n';
}

}  // namespace grex::cli
