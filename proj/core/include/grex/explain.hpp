#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grex/graph.hpp"
#include "grex/models.hpp"
#include "grex/rng.hpp"

namespace grex {

enum class Method { kLime, kSaliency, kGradCam, kRemoval, kRandom };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
inline constexpr Method kAllMethods[] = {Method::kLime, Method::kSaliency,
                                         Method::kGradCam, Method::kRemoval,
                                         Method::kRandom};

/// Per-edge signed importance, EdgeId-indexed. Positive values mark edges
/// that push the explained logit up. Every explainer is a pure function of
/// (model, graph, target, config, seed).
struct Explanation {
  Method method = Method::kRandom;
  std::vector<double> importance;
  TargetSpec target;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

struct LimeConfig {
  double p = 0.3;        // per-edge perturbation probability, in (0,1)
  int m = 0;             // sample count; 0 = min(2000, 50 * |edges|)
  double sigma = 0.0;    // kernel width; 0 = sqrt(|edges|)
  double lambda = 0.01;  // L1 penalty, >= 0
  std::uint64_t seed = 0;
  bool binary_perturbation = false;  // ablation: perturbed weight fixed at 0
  int jobs = 1;
};

/// Independently per edge: with probability p the weight is drawn uniformly
/// from [0,1) (or set to 0 in binary mode), otherwise kept at 1. The result
/// doubles as the LIME feature vector x_k.
EdgeWeights perturb_edges(const Graph& g, double p, Rng& rng, bool binary = false);

/// Locality kernel of the surrogate loss: exp(-(n - ||x||_1)^2 / sigma^2).
double kernel_weight(const EdgeWeights& x, int n, double sigma);

/// Weighted Lasso, cyclic coordinate descent with soft thresholding:
///   minimize sum_k s_k (x_k . w + b - y_k)^2 + lambda * ||w||_1
/// with the intercept b unpenalized. Stops when the largest coefficient
/// change in a sweep drops below 1e-8 or after 10^4 sweeps.
struct LassoFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
  int sweeps = 0;
};
LassoFit fit_lasso(const Tensor& x, const std::vector<double>& y,
                   const std::vector<double>& sample_weights, double lambda);

/// Surrogate-model explanation: m perturbed forwards, then a weighted Lasso
/// of the target logit on the perturbation vectors; importances are the
/// fitted coefficients.
Explanation explain_lime(const GraphModel& model, const Graph& g, const TargetSpec& target,
                         const LimeConfig& config, ForwardCounter* counter = nullptr);

/// Gradient explanation: one traced forward under all-ones weights, one
/// backward; an edge's importance is the sum over steps and directions of the
/// gradient components of its traced messages.
Explanation explain_saliency(const GraphModel& model, const Graph& g,
                             const TargetSpec& target, ForwardCounter* counter = nullptr);

/// Class-activation explanation: per step, channel weights alpha are the
/// node-mean of the gradient of the summed incoming message rows; an edge's
/// importance adds alpha . message for both of its directions, summed over
/// steps.
Explanation explain_gradcam(const GraphModel& model, const Graph& g,
                            const TargetSpec& target, ForwardCounter* counter = nullptr);

/// Leave-one-out baseline: importance[i] = y(all ones) - y(weight i zeroed).
/// Exactly |edges| + 1 forward passes.
Explanation explain_removal(const GraphModel& model, const Graph& g,
                            const TargetSpec& target, ForwardCounter* counter = nullptr,
                            int jobs = 1);

/// Uniform-random importances in [0,1), deterministic per seed.
Explanation explain_random(const Graph& g, std::uint64_t seed);

/// EdgeIds of the k largest importances, ties broken by ascending id; returns
/// all edges when k exceeds the edge count. k must be >= 1.
std::vector<EdgeId> top_k_edges(const Explanation& e, int k);

// ---- files -----------------------------------------------------------------

/// Explanation JSON file: method, dataset, graph name/index, target, seed,
/// config snapshot, importance array.
struct ExplanationRecord {
  Explanation explanation;
  std::string dataset;
  std::string graph_name;
  int graph_index = 0;
};

void save_explanation(const std::filesystem::path& path, const ExplanationRecord& record);
ExplanationRecord load_explanation(const std::filesystem::path& path);

/// CSV export with columns edge_id,u,v,importance. E_SHAPE if the explanation
/// does not match the graph's edge count.
void write_explanation_csv(const std::filesystem::path& path, const Explanation& e,
                           const Graph& g);

}  // namespace grex
