#pragma once

#include <utility>
#include <vector>

#include "grex/graph.hpp"
#include "grex/models.hpp"

namespace grex::testing {

/// Planted-ground-truth model: the class-0 logit is exactly
/// y = sum_i c_i * ew_i, realized through per-direction messages whose value
/// is the raw edge weight (so each edge contributes c_i/2 per direction).
/// Class 1 is a constant 0, making class 0 the interesting logit.
class RiggedLinearModel final : public GraphModel {
 public:
  explicit RiggedLinearModel(std::vector<double> coefficients)
      : coefficients_(std::move(coefficients)) {}

  Task task() const override { return Task::kGraphClassification; }
  std::string arch_name() const override { return "rigged-linear"; }
  int feature_dim() const override { return 1; }
  int num_classes() const override { return 2; }
  int num_steps() const override { return 1; }
  std::vector<Tensor> parameters() const override { return {}; }
  void set_parameters(const std::vector<Tensor>&) override {}
  Tensor input_product(const Graph&) const override { return {}; }

  Tensor logits(const Graph& g, const EdgeWeights& ew,
                const ForwardHooks& hooks = {}) const override {
    if (hooks.counter != nullptr) hooks.counter->add(1);
    if (hooks.tape == nullptr) {
      double y = 0.0;
      for (EdgeId i = 0; i < g.num_edges(); ++i) y += coefficients_[static_cast<std::size_t>(i)] * ew[i];
      Tensor out(1, 2);
      out(0, 0) = y;
      return out;
    }

    Tape& tape = *hooks.tape;
    MessageTrace::Step step;
    std::vector<Tensor> aggregates(static_cast<std::size_t>(g.num_nodes()));
    std::vector<std::vector<Tensor>> per_edge(static_cast<std::size_t>(g.num_edges()));
    for (int v = 0; v < g.num_nodes(); ++v) {
      for (const auto& nb : g.neighbors(v)) {
        Tensor msg = tape.watch(Tensor::scalar(ew[nb.edge]));
        step.messages.push_back({nb.edge, nb.neighbor, v, msg.node, msg.detached()});
        Tensor& agg = aggregates[static_cast<std::size_t>(v)];
        agg = agg.data.empty() ? msg : add(agg, msg);
        per_edge[static_cast<std::size_t>(nb.edge)].push_back(msg);
      }
    }
    step.aggregate_nodes.assign(static_cast<std::size_t>(g.num_nodes()), kNoNode);
    for (int v = 0; v < g.num_nodes(); ++v) {
      if (!aggregates[static_cast<std::size_t>(v)].data.empty()) {
        step.aggregate_nodes[static_cast<std::size_t>(v)] =
            aggregates[static_cast<std::size_t>(v)].node;
      }
    }
    if (hooks.trace != nullptr) {
      hooks.trace->steps.clear();
      hooks.trace->steps.push_back(std::move(step));
    }

    Tensor y;
    for (EdgeId i = 0; i < g.num_edges(); ++i) {
      const auto& pair = per_edge[static_cast<std::size_t>(i)];
      Tensor term = scalar_mul(add(pair[0], pair[1]),
                               coefficients_[static_cast<std::size_t>(i)] / 2.0);
      y = y.data.empty() ? term : add(y, term);
    }
    if (y.data.empty()) y = tape.watch(Tensor::scalar(0.0));
    return concat_cols(y, Tensor::scalar(0.0));
  }

 private:
  std::vector<double> coefficients_;
};

}  // namespace grex::testing
