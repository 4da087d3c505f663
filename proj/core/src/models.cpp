#include "grex/models.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <utility>

#include "grex/rng.hpp"

namespace grex {

namespace {

// ---- weighted neighbor aggregation ------------------------------------------
//
// Both models aggregate scaled neighbor rows of a projected feature matrix M:
//   out[v] = sum over (w,e) in nbrs(v), w ascending, of coef(v,w,e) * M[w]
// with the GCN additionally appending its self-loop contribution last. The
// fused path (training / plain evaluation, one tape node) and the traced path
// (one tape node per directed message) must produce bit-identical values, so
// both express every contribution through the two helpers below and share the
// summation order exactly. Compiled with -ffp-contract=off.

void scale_row_into(double* dst, double coef, const double* src, int n) {
  for (int j = 0; j < n; ++j) dst[j] = coef * src[j];
}

void add_scaled_row(double* dst, double coef, const double* src, int n) {
  for (int j = 0; j < n; ++j) {
    const double t = coef * src[j];
    dst[j] += t;
  }
}

struct AggregateSpec {
  struct Entry {
    int src = 0;      // w, the row of M being pulled in
    EdgeId edge = 0;  // undirected edge carrying the message
    double coef = 0.0;
  };
  std::vector<Entry> entries;     // destination-major, neighbors ascending
  std::vector<int> offsets;       // size num_nodes + 1
  std::vector<double> self_coef;  // per node; empty => no self term
};

/// GCN coefficients: entries of D^{-1/2}(A_w + I)D^{-1/2} split into
/// per-direction message coefficients plus the self-loop diagonal.
AggregateSpec gcn_aggregate_spec(const Graph& g, const EdgeWeights& ew) {
  const int n = g.num_nodes();
  std::vector<double> inv_sqrt(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    double deg = 1.0;  // fixed self-loop
    for (const auto& nb : g.neighbors(v)) deg += ew[nb.edge];
    inv_sqrt[static_cast<std::size_t>(v)] = 1.0 / std::sqrt(deg);
  }
  AggregateSpec spec;
  spec.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  spec.entries.reserve(2 * static_cast<std::size_t>(g.num_edges()));
  spec.self_coef.resize(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    for (const auto& nb : g.neighbors(v)) {
      const double coef = ew[nb.edge] * inv_sqrt[static_cast<std::size_t>(v)] *
                          inv_sqrt[static_cast<std::size_t>(nb.neighbor)];
      spec.entries.push_back({nb.neighbor, nb.edge, coef});
    }
    spec.offsets[static_cast<std::size_t>(v) + 1] = static_cast<int>(spec.entries.size());
    spec.self_coef[static_cast<std::size_t>(v)] =
        inv_sqrt[static_cast<std::size_t>(v)] * inv_sqrt[static_cast<std::size_t>(v)];
  }
  return spec;
}

/// GGNN coefficients: the raw edge weight per direction, no self term.
AggregateSpec ggnn_aggregate_spec(const Graph& g, const EdgeWeights& ew) {
  const int n = g.num_nodes();
  AggregateSpec spec;
  spec.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  spec.entries.reserve(2 * static_cast<std::size_t>(g.num_edges()));
  for (int v = 0; v < n; ++v) {
    for (const auto& nb : g.neighbors(v)) {
      spec.entries.push_back({nb.neighbor, nb.edge, ew[nb.edge]});
    }
    spec.offsets[static_cast<std::size_t>(v) + 1] = static_cast<int>(spec.entries.size());
  }
  return spec;
}

/// Fused aggregation: one tensor op, one tape node.
Tensor aggregate_fused(const Tensor& m, const std::shared_ptr<const AggregateSpec>& spec,
                       const MessageNudge* nudge, int step_index) {
  const int n = static_cast<int>(spec->offsets.size()) - 1;
  const int d = m.cols;
  Tensor out(n, d);
  const bool with_self = !spec->self_coef.empty();
  for (int v = 0; v < n; ++v) {
    double* dst = out.row_ptr(v);
    bool first = true;
    for (int i = spec->offsets[static_cast<std::size_t>(v)];
         i < spec->offsets[static_cast<std::size_t>(v) + 1]; ++i) {
      const auto& entry = spec->entries[static_cast<std::size_t>(i)];
      if (first) {
        scale_row_into(dst, entry.coef, m.row_ptr(entry.src), d);
        first = false;
      } else {
        add_scaled_row(dst, entry.coef, m.row_ptr(entry.src), d);
      }
      if (nudge != nullptr && nudge->step == step_index && nudge->message_index == i) {
        dst[nudge->component] += nudge->delta;
      }
    }
    if (with_self) {
      const double sc = spec->self_coef[static_cast<std::size_t>(v)];
      if (first) {
        scale_row_into(dst, sc, m.row_ptr(v), d);
      } else {
        add_scaled_row(dst, sc, m.row_ptr(v), d);
      }
    }
  }
  detail::check_finite(out, "aggregate");

  if (m.taped()) {
    Tape* tape = m.tape;
    const int pm = m.node;
    out.tape = tape;
    out.node = tape->record(
        n, d, {pm},
        [pm, spec, rows = m.rows, d](const Tensor& g, Tape::GradSink& sink) {
          Tensor gm(rows, d);
          const int nn = static_cast<int>(spec->offsets.size()) - 1;
          for (int v = 0; v < nn; ++v) {
            const double* gv = g.row_ptr(v);
            for (int i = spec->offsets[static_cast<std::size_t>(v)];
                 i < spec->offsets[static_cast<std::size_t>(v) + 1]; ++i) {
              const auto& entry = spec->entries[static_cast<std::size_t>(i)];
              add_scaled_row(gm.row_ptr(entry.src), entry.coef, gv, d);
            }
            if (!spec->self_coef.empty()) {
              add_scaled_row(gm.row_ptr(v), spec->self_coef[static_cast<std::size_t>(v)],
                             gv, d);
            }
          }
          sink.add(pm, gm);
        });
  }
  return out;
}

/// One scaled row of M as its own tape node: value coef * M[src]. The node is
/// recorded even when M is untaped so traced messages always expose a
/// gradient handle.
Tensor scaled_row_node(Tape& tape, const Tensor& m, int src, double coef) {
  Tensor row(1, m.cols);
  scale_row_into(row.data.data(), coef, m.row_ptr(src), m.cols);
  const int pm = m.taped() ? m.node : kNoNode;
  row.tape = &tape;
  row.node =
      tape.record(1, m.cols, {pm}, [pm, src, coef](const Tensor& g, Tape::GradSink& sink) {
        sink.add_row_scaled(pm, src, g, coef);
      });
  return row;
}

/// Assembles per-node rows into an n x d matrix; missing rows stay zero.
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows, int n, int d) {
  Tensor out(n, d);
  std::vector<int> parents(static_cast<std::size_t>(n), kNoNode);
  for (int v = 0; v < n; ++v) {
    const Tensor& r = rows[static_cast<std::size_t>(v)];
    if (r.data.empty()) continue;
    std::copy(r.data.begin(), r.data.end(), out.row_ptr(v));
    parents[static_cast<std::size_t>(v)] = r.node;
  }
  out.tape = &tape;
  out.node = tape.record(n, d, parents,
                         [parents, d](const Tensor& g, Tape::GradSink& sink) {
                           for (std::size_t v = 0; v < parents.size(); ++v) {
                             if (parents[v] == kNoNode) continue;
                             Tensor slice(1, d);
                             std::copy(g.row_ptr(static_cast<int>(v)),
                                       g.row_ptr(static_cast<int>(v)) + d,
                                       slice.data.begin());
                             sink.add(parents[v], slice);
                           }
                         });
  return out;
}

/// Traced aggregation: per-message tape nodes chained in the same order the
/// fused path sums them, recorded into hooks.trace.
Tensor aggregate_traced(const Tensor& m, const AggregateSpec& spec, const Graph& g,
                        const ForwardHooks& hooks, int step_index) {
  Tape& tape = *hooks.tape;
  const int n = g.num_nodes();
  const int d = m.cols;
  MessageTrace::Step step;
  step.messages.reserve(2 * static_cast<std::size_t>(g.num_edges()));
  step.aggregate_nodes.assign(static_cast<std::size_t>(n), kNoNode);

  std::vector<Tensor> rows(static_cast<std::size_t>(n));
  int message_index = 0;
  for (int v = 0; v < n; ++v) {
    Tensor acc;
    for (int i = spec.offsets[static_cast<std::size_t>(v)];
         i < spec.offsets[static_cast<std::size_t>(v) + 1]; ++i) {
      const auto& entry = spec.entries[static_cast<std::size_t>(i)];
      Tensor msg = scaled_row_node(tape, m, entry.src, entry.coef);
      if (hooks.nudge != nullptr && hooks.nudge->step == step_index &&
          hooks.nudge->message_index == message_index) {
        msg.data[static_cast<std::size_t>(hooks.nudge->component)] += hooks.nudge->delta;
      }
      detail::check_finite(msg, "message");
      step.messages.push_back({entry.edge, entry.src, v, msg.node, msg.detached()});
      acc = acc.data.empty() ? msg : add(acc, msg);
      ++message_index;
    }
    if (!acc.data.empty()) step.aggregate_nodes[static_cast<std::size_t>(v)] = acc.node;
    if (!spec.self_coef.empty()) {
      Tensor self_msg =
          scaled_row_node(tape, m, v, spec.self_coef[static_cast<std::size_t>(v)]);
      acc = acc.data.empty() ? self_msg : add(acc, self_msg);
    }
    rows[static_cast<std::size_t>(v)] = std::move(acc);
  }
  hooks.trace->steps.push_back(std::move(step));
  return stack_rows(tape, rows, n, d);
}

Tensor aggregate(const Tensor& m, const std::shared_ptr<const AggregateSpec>& spec,
                 const Graph& g, const ForwardHooks& hooks, int step_index) {
  if (hooks.trace != nullptr) {
    return aggregate_traced(m, *spec, g, hooks, step_index);
  }
  return aggregate_fused(m, spec, hooks.nudge, step_index);
}

// ---- shared forward plumbing -------------------------------------------------

void validate_forward_inputs(const GraphModel& m, const Graph& g, const EdgeWeights& ew,
                             const ForwardHooks& hooks) {
  if (ew.size() != g.num_edges()) {
    throw Error("E_SHAPE", "edge weights of length " + std::to_string(ew.size()) +
                               " for a graph with " + std::to_string(g.num_edges()) +
                               " edges");
  }
  const Tensor& feats =
      hooks.feature_override != nullptr ? *hooks.feature_override : g.node_features();
  if (feats.cols != m.feature_dim()) {
    throw Error("E_SHAPE", "graph features have dim " + std::to_string(feats.cols) +
                               ", model expects " + std::to_string(m.feature_dim()));
  }
  if (feats.rows != g.num_nodes()) {
    throw Error("E_SHAPE", "feature rows do not match node count");
  }
  if (hooks.trace != nullptr && hooks.tape == nullptr) {
    throw Error("E_STATE", "message tracing requires a tape");
  }
}

const std::vector<Tensor>& forward_params(const GraphModel& m, const ForwardHooks& hooks,
                                          std::vector<Tensor>& storage) {
  if (hooks.param_override != nullptr) return *hooks.param_override;
  storage = m.parameters();
  return storage;
}

bool cache_usable(const ForwardHooks& hooks) {
  return hooks.input_cache != nullptr && hooks.param_override == nullptr &&
         hooks.feature_override == nullptr;
}

Tensor glorot(int rows, int cols, Rng& rng) {
  Tensor t(rows, cols);
  const double bound = std::sqrt(6.0 / (rows + cols));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

// ---- normalized adjacency ----------------------------------------------------

Tensor normalized_adjacency(const Graph& g, const EdgeWeights& ew) {
  if (ew.size() != g.num_edges()) {
    throw Error("E_SHAPE", "edge weights of length " + std::to_string(ew.size()) +
                               " for a graph with " + std::to_string(g.num_edges()) +
                               " edges");
  }
  const AggregateSpec spec = gcn_aggregate_spec(g, ew);
  const int n = g.num_nodes();
  Tensor a(n, n);
  for (int v = 0; v < n; ++v) {
    a(v, v) = spec.self_coef[static_cast<std::size_t>(v)];
    for (int i = spec.offsets[static_cast<std::size_t>(v)];
         i < spec.offsets[static_cast<std::size_t>(v) + 1]; ++i) {
      const auto& entry = spec.entries[static_cast<std::size_t>(i)];
      a(v, entry.src) = entry.coef;
    }
  }
  return a;
}

// ---- GCN ----------------------------------------------------------------------

GcnModel::GcnModel(int feature_dim, int hidden_dim, int num_classes, int layers) {
  if (layers < 1) throw Error("E_RANGE", "GCN needs at least one layer");
  if (feature_dim < 1 || hidden_dim < 1 || num_classes < 1) {
    throw Error("E_RANGE", "GCN dims must be positive");
  }
  layers_.reserve(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? feature_dim : hidden_dim;
    const int out = l == layers - 1 ? num_classes : hidden_dim;
    layers_.emplace_back(in, out);
  }
}

GcnModel::GcnModel(std::vector<Tensor> layer_weights) : layers_(std::move(layer_weights)) {
  if (layers_.empty()) throw Error("E_RANGE", "GCN needs at least one layer");
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    if (layers_[l].cols != layers_[l + 1].rows) {
      throw Error("E_SHAPE", "GCN layer dims do not chain at layer " + std::to_string(l));
    }
  }
}

void GcnModel::set_parameters(const std::vector<Tensor>& params) {
  if (params.size() != layers_.size()) {
    throw Error("E_SHAPE", "GCN expects " + std::to_string(layers_.size()) +
                               " parameter tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows != layers_[i].rows || params[i].cols != layers_[i].cols) {
      throw Error("E_SHAPE", "GCN parameter " + std::to_string(i) + " is " +
                                 params[i].shape_str() + ", expected " +
                                 layers_[i].shape_str());
    }
  }
  layers_ = params;
  for (auto& t : layers_) {
    t.tape = nullptr;
    t.node = kNoNode;
  }
}

Tensor GcnModel::logits(const Graph& g, const EdgeWeights& ew,
                        const ForwardHooks& hooks) const {
  return gcn_forward(*this, g, ew, hooks);
}

Tensor GcnModel::input_product(const Graph& g) const {
  return matmul(g.node_features(), layers_.front());
}

Tensor gcn_forward(const GcnModel& m, const Graph& g, const EdgeWeights& ew,
                   const ForwardHooks& hooks) {
  validate_forward_inputs(m, g, ew, hooks);
  if (hooks.counter != nullptr) hooks.counter->add(1);
  if (hooks.trace != nullptr) hooks.trace->steps.clear();

  std::vector<Tensor> storage;
  const std::vector<Tensor>& params = forward_params(m, hooks, storage);
  const auto spec = std::make_shared<const AggregateSpec>(gcn_aggregate_spec(g, ew));

  Tensor h = hooks.feature_override != nullptr ? *hooks.feature_override
                                               : g.node_features();
  const int layers = static_cast<int>(params.size());
  for (int l = 0; l < layers; ++l) {
    Tensor projected = (l == 0 && cache_usable(hooks))
                           ? *hooks.input_cache
                           : matmul(h, params[static_cast<std::size_t>(l)]);
    Tensor agg = aggregate(projected, spec, g, hooks, l);
    h = l + 1 < layers ? relu(agg) : std::move(agg);
  }
  return h;
}

// ---- GGNN ----------------------------------------------------------------------

GgnnModel::GgnnModel(int feature_dim, int state_dim, int num_classes, int steps_in) {
  if (steps_in < 1) throw Error("E_RANGE", "GGNN needs at least one step");
  if (feature_dim < 1 || state_dim < 1 || num_classes < 1) {
    throw Error("E_RANGE", "GGNN dims must be positive");
  }
  steps = steps_in;
  input_proj = Tensor(feature_dim, state_dim);
  message_weight = Tensor(state_dim, state_dim);
  update_w = Tensor(state_dim, state_dim);
  update_u = Tensor(state_dim, state_dim);
  update_b = Tensor(1, state_dim);
  reset_w = Tensor(state_dim, state_dim);
  reset_u = Tensor(state_dim, state_dim);
  reset_b = Tensor(1, state_dim);
  cand_w = Tensor(state_dim, state_dim);
  cand_u = Tensor(state_dim, state_dim);
  cand_b = Tensor(1, state_dim);
  readout_weight = Tensor(state_dim, num_classes);
  readout_bias = Tensor(1, num_classes);
}

std::vector<Tensor> GgnnModel::parameters() const {
  return {input_proj, message_weight, update_w, update_u, update_b,
          reset_w,    reset_u,        reset_b,  cand_w,   cand_u,
          cand_b,     readout_weight, readout_bias};
}

void GgnnModel::set_parameters(const std::vector<Tensor>& params) {
  const std::vector<Tensor*> slots = {
      &input_proj, &message_weight, &update_w, &update_u, &update_b,
      &reset_w,    &reset_u,        &reset_b,  &cand_w,   &cand_u,
      &cand_b,     &readout_weight, &readout_bias};
  if (params.size() != slots.size()) {
    throw Error("E_SHAPE", "GGNN expects " + std::to_string(slots.size()) +
                               " parameter tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (params[i].rows != slots[i]->rows || params[i].cols != slots[i]->cols) {
      throw Error("E_SHAPE", "GGNN parameter " + std::to_string(i) + " is " +
                                 params[i].shape_str() + ", expected " +
                                 slots[i]->shape_str());
    }
    *slots[i] = params[i].detached();
  }
}

Tensor GgnnModel::logits(const Graph& g, const EdgeWeights& ew,
                         const ForwardHooks& hooks) const {
  return ggnn_forward(*this, g, ew, hooks);
}

Tensor GgnnModel::input_product(const Graph& g) const {
  return matmul(g.node_features(), input_proj);
}

Tensor ggnn_forward(const GgnnModel& m, const Graph& g, const EdgeWeights& ew,
                    const ForwardHooks& hooks) {
  validate_forward_inputs(m, g, ew, hooks);
  if (hooks.counter != nullptr) hooks.counter->add(1);
  if (hooks.trace != nullptr) hooks.trace->steps.clear();

  std::vector<Tensor> storage;
  const std::vector<Tensor>& p = forward_params(m, hooks, storage);
  const Tensor& proj = p[0];
  const Tensor& w_msg = p[1];
  const Tensor &wz = p[2], &uz = p[3], &bz = p[4];
  const Tensor &wr = p[5], &ur = p[6], &br = p[7];
  const Tensor &wh = p[8], &uh = p[9], &bh = p[10];
  const Tensor &w_out = p[11], &b_out = p[12];

  const auto spec = std::make_shared<const AggregateSpec>(ggnn_aggregate_spec(g, ew));
  const Tensor& feats =
      hooks.feature_override != nullptr ? *hooks.feature_override : g.node_features();

  Tensor h = cache_usable(hooks) ? *hooks.input_cache : matmul(feats, proj);
  for (int t = 0; t < m.steps; ++t) {
    Tensor msgs = matmul(h, w_msg);
    Tensor a = aggregate(msgs, spec, g, hooks, t);
    Tensor z = sigmoid(add(add(matmul(a, wz), matmul(h, uz)), bz));
    Tensor r = sigmoid(add(add(matmul(a, wr), matmul(h, ur)), br));
    Tensor cand = tanh(add(add(matmul(a, wh), matmul(mul(r, h), uh)), bh));
    h = add(sub(h, mul(z, h)), mul(z, cand));
  }
  Tensor pooled = scalar_mul(row_sum(h), 1.0 / g.num_nodes());
  return add(matmul(pooled, w_out), b_out);
}

// ---- targets -------------------------------------------------------------------

TargetSpec resolve_target(const GraphModel& m, const Graph& g, TargetSpec target,
                          ForwardCounter* counter) {
  if (m.task() == Task::kNodeClassification) {
    if (target.node < 0 || target.node >= g.num_nodes()) {
      throw Error("E_RANGE", "target node " + std::to_string(target.node) +
                                 " outside the graph");
    }
  } else if (target.node != -1) {
    throw Error("E_TASK", "graph-classification target must not name a node");
  }
  if (target.class_id.has_value()) {
    if (*target.class_id < 0 || *target.class_id >= m.num_classes()) {
      throw Error("E_RANGE", "class id " + std::to_string(*target.class_id) +
                                 " on a " + std::to_string(m.num_classes()) +
                                 "-class model");
    }
    return target;
  }
  ForwardHooks hooks;
  hooks.counter = counter;
  const Tensor all = m.logits(g, uniform_weights(g, 1.0), hooks);
  const int row = m.task() == Task::kNodeClassification ? target.node : 0;
  target.class_id = argmax_rows(all)[static_cast<std::size_t>(row)];
  return target;
}

Tensor predict_scalar(const GraphModel& m, const Graph& g, const EdgeWeights& ew,
                      const TargetSpec& target, const ForwardHooks& hooks) {
  TargetSpec t = target;
  if (!t.class_id.has_value()) {
    t = resolve_target(m, g, t, hooks.counter);
  } else {
    t = resolve_target(m, g, t, nullptr);  // validation only, no forward
  }
  const Tensor all = m.logits(g, ew, hooks);
  const int row = m.task() == Task::kNodeClassification ? t.node : 0;
  const int row_ids[1] = {row};
  Tensor row_logits = select_rows(all, row_ids);
  Tensor pick(m.num_classes(), 1);
  pick(*t.class_id, 0) = 1.0;
  return matmul(row_logits, pick);
}

// ---- training --------------------------------------------------------------------

namespace {

std::unique_ptr<GraphModel> init_model(const ModelSpec& spec, int feature_dim,
                                       int num_classes, std::uint64_t seed) {
  if (spec.arch == Arch::kGcn) {
    auto model = std::make_unique<GcnModel>(feature_dim, spec.hidden_dim, num_classes,
                                            spec.depth);
    std::vector<Tensor> params = model->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      Rng rng(Rng::derive(seed, i));
      params[i] = glorot(params[i].rows, params[i].cols, rng);
    }
    model->set_parameters(params);
    return model;
  }
  auto model = std::make_unique<GgnnModel>(feature_dim, spec.hidden_dim, num_classes,
                                           spec.depth);
  std::vector<Tensor> params = model->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows == 1) continue;  // biases start at zero
    Rng rng(Rng::derive(seed, i));
    params[i] = glorot(params[i].rows, params[i].cols, rng);
  }
  model->set_parameters(params);
  return model;
}

int count_classes(const LabeledDataset& dataset) {
  int max_label = -1;
  if (dataset.task == Task::kNodeClassification) {
    for (int y : dataset.graphs.front().node_labels()) max_label = std::max(max_label, y);
  } else {
    for (const Graph& g : dataset.graphs) {
      if (g.graph_label()) max_label = std::max(max_label, *g.graph_label());
    }
  }
  return max_label + 1;
}

double node_accuracy(const GraphModel& m, const Graph& g, const std::vector<int>& units) {
  if (units.empty()) return 0.0;
  const Tensor logits = m.logits(g, uniform_weights(g, 1.0));
  const std::vector<int> pred = argmax_rows(logits);
  int hits = 0;
  for (int v : units) {
    if (pred[static_cast<std::size_t>(v)] == g.node_labels()[static_cast<std::size_t>(v)]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(units.size());
}

double graph_accuracy(const GraphModel& m, const LabeledDataset& dataset,
                      const std::vector<int>& units) {
  if (units.empty()) return 0.0;
  int hits = 0;
  for (int gi : units) {
    const Graph& g = dataset.graphs[static_cast<std::size_t>(gi)];
    const Tensor logits = m.logits(g, uniform_weights(g, 1.0));
    if (argmax_rows(logits)[0] == *g.graph_label()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(units.size());
}

}  // namespace

TrainedModel train(const ModelSpec& spec, const LabeledDataset& dataset,
                   const TrainConfig& config) {
  const Task expected_task =
      spec.arch == Arch::kGcn ? Task::kNodeClassification : Task::kGraphClassification;
  if (dataset.task != expected_task) {
    throw Error("E_TASK", std::string(spec.arch == Arch::kGcn ? "gcn" : "ggnn") +
                              " performs " + task_name(expected_task) + " but dataset '" +
                              dataset.name + "' is " + task_name(dataset.task));
  }
  if (dataset.graphs.empty()) throw Error("E_TASK", "dataset has no graphs");
  if (dataset.task == Task::kNodeClassification) {
    if (dataset.graphs.size() != 1) {
      throw Error("E_TASK", "node-classification dataset must hold exactly one graph");
    }
    if (!dataset.graphs.front().has_node_labels()) {
      throw Error("E_TASK", "dataset '" + dataset.name + "' has no node labels");
    }
  } else {
    for (const Graph& g : dataset.graphs) {
      if (!g.graph_label().has_value()) {
        throw Error("E_TASK", "graph '" + g.name() + "' has no graph label");
      }
    }
  }
  if (!(config.learning_rate > 0.0)) throw Error("E_RANGE", "learning rate must be positive");
  if (config.epochs < 0) throw Error("E_RANGE", "negative epoch count");
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw Error("E_RANGE", "train fraction must lie in (0,1)");
  }

  const int num_classes = count_classes(dataset);
  if (num_classes < 2) throw Error("E_TASK", "dataset has fewer than two classes");
  const int feature_dim = dataset.graphs.front().feature_dim();

  TrainedModel out;
  out.model = init_model(spec, feature_dim, num_classes, config.seed);
  GraphModel& model = *out.model;
  const TrainTestSplit split = split_units(dataset, config.train_fraction, config.seed);

  std::vector<Tensor> params = model.parameters();
  out.metrics.loss_curve.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Tape tape;
    std::vector<Tensor> taped;
    taped.reserve(params.size());
    for (const Tensor& p : params) taped.push_back(tape.watch(p));

    ForwardHooks hooks;
    hooks.tape = &tape;
    hooks.param_override = &taped;

    Tensor loss;
    try {
      if (dataset.task == Task::kNodeClassification) {
        const Graph& g = dataset.graphs.front();
        Tensor logits = model.logits(g, uniform_weights(g, 1.0), hooks);
        Tensor train_logits = select_rows(logits, split.train);
        std::vector<int> labels(split.train.size());
        for (std::size_t i = 0; i < split.train.size(); ++i) {
          labels[i] = g.node_labels()[static_cast<std::size_t>(split.train[i])];
        }
        loss = softmax_cross_entropy(train_logits, labels);
      } else {
        Tensor total;
        for (int gi : split.train) {
          const Graph& g = dataset.graphs[static_cast<std::size_t>(gi)];
          Tensor logits = model.logits(g, uniform_weights(g, 1.0), hooks);
          const int label[1] = {*g.graph_label()};
          Tensor item = softmax_cross_entropy(logits, label);
          total = total.data.empty() ? item : add(total, item);
        }
        loss = scalar_mul(total, 1.0 / static_cast<double>(split.train.size()));
      }
    } catch (const Error& e) {
      if (e.code() == "E_NONFINITE") {
        throw Error("E_DIVERGED", "training diverged at epoch " + std::to_string(epoch) +
                                      ": " + e.what());
      }
      throw;
    }

    out.metrics.loss_curve.push_back(loss.value());
    const GradientMap grads = tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& grad = grads.at(taped[i]);
      for (int j = 0; j < params[i].size(); ++j) {
        params[i].data[static_cast<std::size_t>(j)] -=
            config.learning_rate * grad.data[static_cast<std::size_t>(j)];
      }
    }
    model.set_parameters(params);
  }

  if (dataset.task == Task::kNodeClassification) {
    const Graph& g = dataset.graphs.front();
    out.metrics.train_accuracy = node_accuracy(model, g, split.train);
    out.metrics.test_accuracy = node_accuracy(model, g, split.test);
  } else {
    out.metrics.train_accuracy = graph_accuracy(model, dataset, split.train);
    out.metrics.test_accuracy = graph_accuracy(model, dataset, split.test);
  }
  return out;
}

// ---- checkpoints --------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const GraphModel& model,
                     const CheckpointInfo& info) {
  nlohmann::ordered_json j;
  j["architecture"] = model.arch_name();
  j["feature_dim"] = model.feature_dim();
  j["num_classes"] = model.num_classes();
  j["steps"] = model.num_steps();
  if (const auto* ggnn = dynamic_cast<const GgnnModel*>(&model)) {
    j["state_dim"] = ggnn->state_dim();
  }
  auto params = nlohmann::ordered_json::array();
  for (const Tensor& p : model.parameters()) {
    nlohmann::ordered_json entry;
    entry["rows"] = p.rows;
    entry["cols"] = p.cols;
    entry["data"] = p.data;
    params.push_back(std::move(entry));
  }
  j["params"] = std::move(params);
  j["training_seed"] = info.training_seed;
  j["dataset"] = info.dataset;

  std::ofstream out(path);
  if (!out) throw Error("E_IO", "cannot write checkpoint '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("E_IO", "cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_FORMAT", "checkpoint '" + path.string() + "': " + e.what());
  }
  try {
    std::vector<Tensor> params;
    for (const auto& entry : j.at("params")) {
      Tensor p(entry.at("rows").get<int>(), entry.at("cols").get<int>());
      const auto values = entry.at("data").get<std::vector<double>>();
      if (static_cast<int>(values.size()) != p.size()) {
        throw Error("E_FORMAT", "checkpoint parameter data length mismatch");
      }
      p.data = values;
      params.push_back(std::move(p));
    }
    const std::string arch = j.at("architecture").get<std::string>();
    LoadedCheckpoint out;
    if (arch == "gcn") {
      out.model = std::make_unique<GcnModel>(std::move(params));
    } else if (arch == "ggnn") {
      auto model = std::make_unique<GgnnModel>(
          j.at("feature_dim").get<int>(), j.at("state_dim").get<int>(),
          j.at("num_classes").get<int>(), j.at("steps").get<int>());
      model->set_parameters(params);
      out.model = std::move(model);
    } else {
      throw Error("E_FORMAT", "unknown architecture '" + arch + "' in checkpoint");
    }
    out.info.training_seed = j.at("training_seed").get<std::uint64_t>();
    out.info.dataset = j.value("dataset", std::string{});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_FORMAT", "checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace grex
