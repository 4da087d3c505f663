#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grex/datasets.hpp"
#include "grex/graph.hpp"
#include "grex/tensor.hpp"

namespace grex {

/// Counts model forward passes. Shared across threads by the evaluation
/// harness; incremented once per logits() call.
class ForwardCounter {
 public:
  void add(std::int64_t n = 1) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::int64_t count() const { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::int64_t> count_{0};
};

/// Per-edge message instrumentation. For every message-passing step t (0-based
/// here, step t of 1..T in the update rule) the trace holds one entry per
/// directed propagation w -> v of every edge, in destination-major order
/// (v ascending, then neighbor ascending), plus the tape node of each
/// destination's summed incoming message. Entry count per step is exactly
/// 2 * |edges|.
struct MessageTrace {
  struct DirectedMessage {
    EdgeId edge = 0;
    NodeIndex from = 0;  // w: source of the propagation
    NodeIndex to = 0;    // v: destination aggregating the message
    int node = kNoNode;  // tape node of the weighted message (1 x d)
    Tensor value;        // forward value of that message, detached
  };
  struct Step {
    std::vector<DirectedMessage> messages;
    std::vector<int> aggregate_nodes;  // per node; kNoNode when nothing arrives
  };
  std::vector<Step> steps;
};

/// Gradient diagnostic: adds `delta` to one component of one traced message
/// during the forward pass, identified by (step, message_index) in the
/// trace's enumeration order. Used to finite-difference y with respect to
/// individual messages.
struct MessageNudge {
  int step = 0;
  int message_index = 0;
  int component = 0;
  double delta = 0.0;
};

/// Optional observers and overrides for a forward pass. All pointers may be
/// null. trace requires tape. param_override replaces the model's parameters
/// (same order as parameters()) with taped copies, which is how training
/// differentiates the loss; input_cache short-circuits the edge-weight
/// independent input product (see GraphModel::input_product) and is ignored
/// whenever param_override or feature_override is set.
struct ForwardHooks {
  Tape* tape = nullptr;
  MessageTrace* trace = nullptr;
  ForwardCounter* counter = nullptr;
  const MessageNudge* nudge = nullptr;
  const std::vector<Tensor>* param_override = nullptr;
  const Tensor* feature_override = nullptr;
  const Tensor* input_cache = nullptr;
};

/// What is being explained: the pre-softmax logit of class `class_id` at
/// `node` (node tasks) or of the whole graph (node == -1). An empty class_id
/// means "the class predicted under all-ones weights", resolved once and then
/// held fixed.
struct TargetSpec {
  int node = -1;
  std::optional<int> class_id;
};

/// Common surface of the trainable models (and of test doubles used by the
/// explainers). Implementations are immutable during forwards; concurrent
/// evaluations need only distinct tapes.
class GraphModel {
 public:
  virtual ~GraphModel() = default;

  virtual Task task() const = 0;
  virtual std::string arch_name() const = 0;
  virtual int feature_dim() const = 0;
  virtual int num_classes() const = 0;
  /// Message-passing rounds == number of trace steps.
  virtual int num_steps() const = 0;

  /// Flat parameter list in a fixed, documented order.
  virtual std::vector<Tensor> parameters() const = 0;
  virtual void set_parameters(const std::vector<Tensor>& params) = 0;

  /// Class logits: num_nodes x C for node tasks, 1 x C for graph tasks.
  virtual Tensor logits(const Graph& g, const EdgeWeights& ew,
                        const ForwardHooks& hooks = {}) const = 0;

  /// Edge-weight-independent first projection of the inputs, reusable across
  /// repeated forwards on the same graph via ForwardHooks::input_cache.
  virtual Tensor input_product(const Graph& g) const = 0;
};

/// Graph convolutional network for node classification: T-1 relu layers and
/// a linear output layer, propagating through the degree-normalized weighted
/// adjacency with fixed self-loops. No biases.
class GcnModel final : public GraphModel {
 public:
  GcnModel() = default;
  /// Layer dims chain feature_dim -> hidden (x layers-1) -> num_classes.
  GcnModel(int feature_dim, int hidden_dim, int num_classes, int layers);
  explicit GcnModel(std::vector<Tensor> layer_weights);

  Task task() const override { return Task::kNodeClassification; }
  std::string arch_name() const override { return "gcn"; }
  int feature_dim() const override { return layers_.front().rows; }
  int num_classes() const override { return layers_.back().cols; }
  int num_steps() const override { return static_cast<int>(layers_.size()); }
  std::vector<Tensor> parameters() const override { return layers_; }
  void set_parameters(const std::vector<Tensor>& params) override;
  Tensor logits(const Graph& g, const EdgeWeights& ew,
                const ForwardHooks& hooks = {}) const override;
  Tensor input_product(const Graph& g) const override;

  const std::vector<Tensor>& layer_weights() const { return layers_; }

 private:
  std::vector<Tensor> layers_;
};

/// Gated graph neural network for graph classification: T rounds of
/// h_v <- GRU(h_v, sum_w ew * (W h_w)), then a linear readout of the mean
/// node state. Inputs are linearly projected to the state dim at step 0.
class GgnnModel final : public GraphModel {
 public:
  GgnnModel() = default;
  GgnnModel(int feature_dim, int state_dim, int num_classes, int steps);

  Task task() const override { return Task::kGraphClassification; }
  std::string arch_name() const override { return "ggnn"; }
  int feature_dim() const override { return input_proj.rows; }
  int num_classes() const override { return readout_weight.cols; }
  int num_steps() const override { return steps; }
  int state_dim() const { return message_weight.rows; }
  std::vector<Tensor> parameters() const override;
  void set_parameters(const std::vector<Tensor>& params) override;
  Tensor logits(const Graph& g, const EdgeWeights& ew,
                const ForwardHooks& hooks = {}) const override;
  Tensor input_product(const Graph& g) const override;

  // Parameter order (parameters()/set_parameters/checkpoints):
  // input_proj, message_weight, update_w, update_u, update_b, reset_w,
  // reset_u, reset_b, cand_w, cand_u, cand_b, readout_weight, readout_bias.
  Tensor input_proj;      // feature_dim x d
  Tensor message_weight;  // d x d
  Tensor update_w, update_u, update_b;
  Tensor reset_w, reset_u, reset_b;
  Tensor cand_w, cand_u, cand_b;
  Tensor readout_weight;  // d x C
  Tensor readout_bias;    // 1 x C
  int steps = 1;
};

/// Symmetrically normalized weighted adjacency with self-loops:
/// D^{-1/2} (A_w + I) D^{-1/2}, where A_w carries the edge weights and the
/// degree of v is 1 + sum of its incident weights. Dense, for inspection;
/// the forward pass applies the same coefficients sparsely.
Tensor normalized_adjacency(const Graph& g, const EdgeWeights& ew);

/// Free-function forms of the model forwards (logits() delegates here).
Tensor gcn_forward(const GcnModel& m, const Graph& g, const EdgeWeights& ew,
                   const ForwardHooks& hooks = {});
Tensor ggnn_forward(const GgnnModel& m, const Graph& g, const EdgeWeights& ew,
                    const ForwardHooks& hooks = {});

/// Fills in target.class_id ("predicted") from an all-ones-weights forward
/// when absent. The extra forward is counted on `counter` if given.
TargetSpec resolve_target(const GraphModel& m, const Graph& g, TargetSpec target,
                          ForwardCounter* counter = nullptr);

/// The scalar being explained: the pre-softmax logit of the target class at
/// the target node/graph, as a 1x1 tensor (taped when hooks.tape is set).
Tensor predict_scalar(const GraphModel& m, const Graph& g, const EdgeWeights& ew,
                      const TargetSpec& target, const ForwardHooks& hooks = {});

// ---- training ---------------------------------------------------------------

enum class Arch { kGcn, kGgnn };

struct ModelSpec {
  Arch arch = Arch::kGcn;
  int hidden_dim = 32;  // GCN hidden width / GGNN state dim
  int depth = 3;        // GCN layer count / GGNN step count
};

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 400;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

struct TrainMetrics {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> loss_curve;  // one entry per epoch, pre-update loss
};

struct TrainedModel {
  std::unique_ptr<GraphModel> model;
  TrainMetrics metrics;
};

/// Deterministic full-batch gradient descent with fixed-step updates.
/// E_TASK if the architecture and dataset task disagree or labels are
/// missing; E_DIVERGED if the loss leaves the finite range.
TrainedModel train(const ModelSpec& spec, const LabeledDataset& dataset,
                   const TrainConfig& config);

// ---- checkpoints -------------------------------------------------------------

struct CheckpointInfo {
  std::uint64_t training_seed = 0;
  std::string dataset;
};

/// JSON checkpoint with architecture tag, dims, and flat parameter arrays.
/// Doubles round-trip exactly; a loaded model reproduces forwards
/// bit-identically.
void save_checkpoint(const std::filesystem::path& path, const GraphModel& model,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
  std::unique_ptr<GraphModel> model;
  CheckpointInfo info;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace grex
