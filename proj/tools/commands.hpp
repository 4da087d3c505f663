#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace grex::cli {

struct GenDataOptions {
  std::string dataset;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  int num_graphs = 400;
};

struct TrainOptions {
  std::filesystem::path data;
  std::string model;
  int epochs = -1;       // -1: architecture default
  double lr = -1.0;      // <0: architecture default
  int hidden = -1;
  int depth = -1;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct ExplainOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string method;
  int target = 0;          // node id (node tasks) or graph index (graph tasks)
  int target_class = -1;   // -1: the predicted class
  double p = 0.3;
  int m = 0;
  double sigma = 0.0;
  double lambda = 0.01;
  bool binary_perturbation = false;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path out;
};

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::vector<std::string> methods;
  std::string metric = "recall";
  int k = 5;
  int removal_steps = 5;
  std::vector<std::uint64_t> seeds{0};
  int max_targets = 100;
  int lime_m = 0;
  int jobs = 1;
  bool timings = false;
  std::filesystem::path out;
};

struct ExportDotOptions {
  std::filesystem::path explanation;
  std::filesystem::path data;
  std::filesystem::path out;
  int top_k = 5;
};

void cmd_gen_data(const GenDataOptions& options);
void cmd_train(const TrainOptions& options);
void cmd_explain(const ExplainOptions& options);
void cmd_evaluate(const EvaluateOptions& options);
void cmd_export_dot(const ExportDotOptions& options);

}  // namespace grex::cli
