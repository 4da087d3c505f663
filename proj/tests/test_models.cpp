#include <doctest.h>

#include <cmath>
#include <memory>
#include <set>

#include "grex/datasets.hpp"
#include "grex/models.hpp"
#include "test_util.hpp"

using namespace grex;
using grex::testing::bit_equal;
using grex::testing::max_abs_diff;
using grex::testing::random_graph;
using grex::testing::random_tensor;

namespace {

GcnModel random_gcn(int feature_dim, int hidden, int classes, int layers,
                    std::uint64_t seed) {
  GcnModel m(feature_dim, hidden, classes, layers);
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = random_tensor(params[i].rows, params[i].cols, seed + i, -0.7, 0.7);
  }
  m.set_parameters(params);
  return m;
}

GgnnModel random_ggnn(int feature_dim, int d, int classes, int steps, std::uint64_t seed) {
  GgnnModel m(feature_dim, d, classes, steps);
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = random_tensor(params[i].rows, params[i].cols, seed + i, -0.5, 0.5);
  }
  m.set_parameters(params);
  return m;
}

Graph drop_edge(const Graph& g, EdgeId id) {
  std::vector<std::pair<int, int>> edges;
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    if (e == id) continue;
    edges.emplace_back(g.edge(e).u, g.edge(e).v);
  }
  return build_graph(g.num_nodes(), std::move(edges), g.node_features(),
                     g.node_labels(), g.graph_label(), g.name());
}

int hop_distance(const Graph& g, int a, int b) {
  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes()), -1);
  std::vector<int> queue{a};
  dist[static_cast<std::size_t>(a)] = 0;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const int u = queue[qi];
    for (const auto& nb : g.neighbors(u)) {
      if (dist[static_cast<std::size_t>(nb.neighbor)] == -1) {
        dist[static_cast<std::size_t>(nb.neighbor)] = dist[static_cast<std::size_t>(u)] + 1;
        queue.push_back(nb.neighbor);
      }
    }
  }
  return dist[static_cast<std::size_t>(b)];
}

}  // namespace

TEST_SUITE_BEGIN("models");

TEST_CASE("normalized adjacency of a single weighted edge") {
  const Graph g = build_graph(2, {{0, 1}}, Tensor::full(2, 1, 1.0));
  const Tensor a = normalized_adjacency(g, uniform_weights(g, 1.0));
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) CHECK(a(r, c) == doctest::Approx(0.5).epsilon(1e-14));
  }
}

TEST_CASE("normalized adjacency with all-zero weights is the identity") {
  const Graph g = random_graph(8, 5, 3);
  const Tensor a = normalized_adjacency(g, uniform_weights(g, 0.0));
  CHECK(max_abs_diff(a, Tensor::identity(8)) == 0.0);
}

TEST_CASE("normalized adjacency rejects a wrong-length weight vector") {
  const Graph g = random_graph(6, 2, 4);
  const Graph other = random_graph(6, 4, 5);
  CHECK_THROWS_AS(normalized_adjacency(g, uniform_weights(other, 1.0)), Error);
}

TEST_CASE("all-zero parameters give all-zero logits") {
  const Graph g = random_graph(7, 4, 6);
  GcnModel m(g.feature_dim(), 5, 3, 2);  // zero-initialized
  const Tensor logits = gcn_forward(m, g, uniform_weights(g, 1.0));
  CHECK(max_abs_diff(logits, Tensor(7, 3)) == 0.0);
}

TEST_CASE("tracing never changes forward values") {
  const Graph g = random_graph(9, 6, 7);
  const EdgeWeights ew = uniform_weights(g, 1.0);

  const GcnModel gcn = random_gcn(g.feature_dim(), 6, 3, 3, 10);
  const Tensor plain = gcn_forward(gcn, g, ew);
  Tape tape;
  MessageTrace trace;
  ForwardHooks hooks;
  hooks.tape = &tape;
  hooks.trace = &trace;
  CHECK(bit_equal(gcn_forward(gcn, g, ew, hooks), plain));

  const GgnnModel ggnn = random_ggnn(g.feature_dim(), 4, 2, 3, 20);
  const Tensor plain2 = ggnn_forward(ggnn, g, ew);
  Tape tape2;
  MessageTrace trace2;
  ForwardHooks hooks2;
  hooks2.tape = &tape2;
  hooks2.trace = &trace2;
  CHECK(bit_equal(ggnn_forward(ggnn, g, ew, hooks2), plain2));

  SUBCASE("partial weights too") {
    EdgeWeights mixed = ew;
    for (EdgeId i = 0; i < g.num_edges(); i += 2) mixed = mixed.with_weight(i, 0.3);
    const Tensor p = gcn_forward(gcn, g, mixed);
    Tape t3;
    MessageTrace tr3;
    ForwardHooks h3;
    h3.tape = &t3;
    h3.trace = &tr3;
    CHECK(bit_equal(gcn_forward(gcn, g, mixed, h3), p));
  }
}

TEST_CASE("trace layout: two directed messages per edge per step") {
  const Graph g = random_graph(8, 4, 8);
  const GgnnModel m = random_ggnn(g.feature_dim(), 4, 2, 3, 30);
  Tape tape;
  MessageTrace trace;
  ForwardHooks hooks;
  hooks.tape = &tape;
  hooks.trace = &trace;
  (void)ggnn_forward(m, g, uniform_weights(g, 1.0), hooks);

  REQUIRE(static_cast<int>(trace.steps.size()) == m.num_steps());
  std::set<int> node_ids;
  for (const auto& step : trace.steps) {
    CHECK(static_cast<int>(step.messages.size()) == 2 * g.num_edges());
    std::vector<int> per_edge(static_cast<std::size_t>(g.num_edges()), 0);
    for (const auto& msg : step.messages) {
      CHECK(node_ids.insert(msg.node).second);  // distinct tape nodes
      ++per_edge[static_cast<std::size_t>(msg.edge)];
    }
    for (int count : per_edge) CHECK(count == 2);
    CHECK(static_cast<int>(step.aggregate_nodes.size()) == g.num_nodes());
  }
}

TEST_CASE("weight zero is exactly edge deletion") {
  const Graph g = random_graph(10, 6, 9);
  const GcnModel gcn = random_gcn(g.feature_dim(), 5, 3, 3, 40);
  const GgnnModel ggnn = random_ggnn(g.feature_dim(), 4, 2, 2, 50);
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    const Graph reduced = drop_edge(g, i);
    const EdgeWeights zeroed = uniform_weights(g, 1.0).with_weight(i, 0.0);
    CHECK(max_abs_diff(gcn_forward(gcn, g, zeroed),
                       gcn_forward(gcn, reduced, uniform_weights(reduced, 1.0))) < 1e-12);
    CHECK(max_abs_diff(ggnn_forward(ggnn, g, zeroed),
                       ggnn_forward(ggnn, reduced, uniform_weights(reduced, 1.0))) < 1e-12);
  }
}

TEST_CASE("zeroing an edge only moves logits within the receptive field") {
  const Graph g = grex::testing::path_graph(7, 3);
  const GcnModel m = random_gcn(3, 4, 2, 2, 60);  // 2-hop model
  const Tensor base = gcn_forward(m, g, uniform_weights(g, 1.0));
  const EdgeId cut = 0;  // edge (0,1)
  const Tensor cut_logits = gcn_forward(m, g, uniform_weights(g, 1.0).with_weight(cut, 0.0));
  for (int v = 0; v < g.num_nodes(); ++v) {
    const int d = std::min(hop_distance(g, v, g.edge(cut).u), hop_distance(g, v, g.edge(cut).v));
    double row_diff = 0.0;
    for (int c = 0; c < base.cols; ++c) {
      row_diff = std::max(row_diff, std::abs(base(v, c) - cut_logits(v, c)));
    }
    if (d > 2) {
      CHECK(row_diff < 1e-12);
    }
  }
  // the endpoint itself must move (non-degenerate check)
  double endpoint_diff = 0.0;
  for (int c = 0; c < base.cols; ++c) {
    endpoint_diff = std::max(endpoint_diff, std::abs(base(0, c) - cut_logits(0, c)));
  }
  CHECK(endpoint_diff > 1e-9);
}

TEST_CASE("node relabeling permutes GCN logits and fixes GGNN logits") {
  const Graph g = random_graph(9, 5, 11);
  const std::vector<int> perm = {3, 7, 1, 0, 8, 5, 2, 6, 4};
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : g.edges()) {
    edges.emplace_back(perm[static_cast<std::size_t>(e.u)],
                       perm[static_cast<std::size_t>(e.v)]);
  }
  Tensor features(g.num_nodes(), g.feature_dim());
  for (int v = 0; v < g.num_nodes(); ++v) {
    for (int c = 0; c < g.feature_dim(); ++c) {
      features(perm[static_cast<std::size_t>(v)], c) = g.node_features()(v, c);
    }
  }
  const Graph pg = build_graph(g.num_nodes(), std::move(edges), std::move(features));

  const GcnModel gcn = random_gcn(g.feature_dim(), 5, 3, 3, 70);
  const Tensor a = gcn_forward(gcn, g, uniform_weights(g, 1.0));
  const Tensor b = gcn_forward(gcn, pg, uniform_weights(pg, 1.0));
  for (int v = 0; v < g.num_nodes(); ++v) {
    for (int c = 0; c < a.cols; ++c) {
      CHECK(a(v, c) == doctest::Approx(b(perm[static_cast<std::size_t>(v)], c)).epsilon(1e-10));
    }
  }

  const GgnnModel ggnn = random_ggnn(g.feature_dim(), 4, 2, 3, 80);
  CHECK(max_abs_diff(ggnn_forward(ggnn, g, uniform_weights(g, 1.0)),
                     ggnn_forward(ggnn, pg, uniform_weights(pg, 1.0))) < 1e-10);
}

TEST_CASE("all-zero weights cut every cross-node flow in the GGNN") {
  const Graph g = random_graph(6, 4, 12);
  const GgnnModel m = random_ggnn(g.feature_dim(), 4, 2, 3, 90);
  const Tensor zeroed = ggnn_forward(m, g, uniform_weights(g, 0.0));

  // isolated per-node evaluation: the readout is affine in the pooled state,
  // so the zero-flow logits equal the mean of single-node-graph logits
  Tensor mean(1, zeroed.cols);
  for (int v = 0; v < g.num_nodes(); ++v) {
    Tensor row(1, g.feature_dim());
    for (int c = 0; c < g.feature_dim(); ++c) row(0, c) = g.node_features()(v, c);
    const Graph single = build_graph(1, {}, row);
    const Tensor lv = ggnn_forward(m, single, uniform_weights(single, 1.0));
    for (int c = 0; c < mean.cols; ++c) mean(0, c) += lv(0, c) / g.num_nodes();
  }
  CHECK(max_abs_diff(zeroed, mean) < 1e-12);
}

TEST_CASE("single-node graph aggregates nothing and still evaluates") {
  const Graph g = build_graph(1, {}, Tensor::full(1, 3, 0.5));
  const GgnnModel m = random_ggnn(3, 4, 2, 2, 95);
  Tape tape;
  MessageTrace trace;
  ForwardHooks hooks;
  hooks.tape = &tape;
  hooks.trace = &trace;
  const Tensor logits = ggnn_forward(m, g, uniform_weights(g, 1.0), hooks);
  CHECK(logits.rows == 1);
  for (const auto& step : trace.steps) CHECK(step.messages.empty());
}

TEST_CASE("traced message gradients match finite differences") {
  const Graph g = random_graph(7, 4, 13);
  const EdgeWeights ones = uniform_weights(g, 1.0);
  const TargetSpec target_node{2, 1};
  const TargetSpec target_graph{-1, 0};

  const auto check_model = [&](const GraphModel& m, const TargetSpec& target) {
    Tape tape;
    MessageTrace trace;
    ForwardHooks hooks;
    hooks.tape = &tape;
    hooks.trace = &trace;
    const Tensor y = predict_scalar(m, g, ones, target, hooks);
    const GradientMap grads = tape.backward(y);

    const double delta = 1e-3;
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
      const auto& step = trace.steps[s];
      // probe a handful of messages per step
      for (std::size_t mi = 0; mi < step.messages.size(); mi += 5) {
        const auto& msg = step.messages[mi];
        for (int comp = 0; comp < msg.value.cols; comp += 3) {
          MessageNudge up{static_cast<int>(s), static_cast<int>(mi), comp, delta};
          MessageNudge down{static_cast<int>(s), static_cast<int>(mi), comp, -delta};
          ForwardHooks hup;
          hup.nudge = &up;
          ForwardHooks hdown;
          hdown.nudge = &down;
          const double y_up = predict_scalar(m, g, ones, target, hup).value();
          const double y_down = predict_scalar(m, g, ones, target, hdown).value();
          const double cd = (y_up - y_down) / (2.0 * delta);
          const double analytic = grads.at(msg.node).data[static_cast<std::size_t>(comp)];
          const double err =
              std::abs(analytic - cd) / std::max({std::abs(analytic), std::abs(cd), 1e-12});
          CHECK(err < 1e-4);
        }
      }
    }
  };

  check_model(random_gcn(g.feature_dim(), 5, 3, 3, 100), target_node);
  check_model(random_ggnn(g.feature_dim(), 4, 2, 3, 110), target_graph);
}

TEST_CASE("full forward gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const Graph g = random_graph(10, 6, 140 + seed);
    const EdgeWeights ones = uniform_weights(g, 1.0);

    const GcnModel gcn = random_gcn(g.feature_dim(), 4, 3, 2, 150 + seed);
    const TargetSpec t{1, 2};
    auto params = gcn.parameters();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      const auto f = [&](const Tensor& x) {
        auto p = params;
        p[pi] = x;
        ForwardHooks hooks;
        hooks.tape = x.tape;
        hooks.param_override = &p;
        return predict_scalar(gcn, g, ones, t, hooks);
      };
      CHECK(grad_check(f, params[pi], 1e-3) < 1e-4);
    }
    const auto f_feat = [&](const Tensor& x) {
      ForwardHooks hooks;
      hooks.tape = x.tape;
      hooks.feature_override = &x;
      return predict_scalar(gcn, g, ones, t, hooks);
    };
    CHECK(grad_check(f_feat, g.node_features(), 1e-3) < 1e-4);
  }
}

TEST_CASE("predict_scalar selects the requested logit") {
  // one isolated node, single linear layer: logits equal the parameter row
  const Graph g = build_graph(1, {}, Tensor::full(1, 1, 1.0));
  GcnModel m(std::vector<Tensor>{Tensor::from_row(std::vector<double>{1.2, -0.3})});
  CHECK(predict_scalar(m, g, uniform_weights(g, 1.0), TargetSpec{0, 0}).value() ==
        doctest::Approx(1.2).epsilon(1e-12));
  // "predicted" resolves to class 0 and stays fixed
  const TargetSpec resolved = resolve_target(m, g, TargetSpec{0, std::nullopt});
  CHECK(resolved.class_id == 0);
  CHECK(predict_scalar(m, g, uniform_weights(g, 1.0), resolved).value() ==
        doctest::Approx(1.2).epsilon(1e-12));
  CHECK_THROWS_AS(
      (void)predict_scalar(m, g, uniform_weights(g, 1.0), TargetSpec{0, 5}), Error);
}

TEST_CASE("training is deterministic and learns a tiny dataset") {
  BaShapesParams params;
  params.base_nodes = 40;
  params.num_houses = 6;
  params.attachment = 3;
  params.feature_dim = 4;
  const LabeledDataset data = gen_ba_shapes(5, params);

  ModelSpec spec;
  spec.arch = Arch::kGcn;
  spec.hidden_dim = 8;
  spec.depth = 3;
  TrainConfig config;
  config.learning_rate = 0.05;
  config.epochs = 60;
  config.seed = 1;

  const TrainedModel a = train(spec, data, config);
  const TrainedModel b = train(spec, data, config);
  REQUIRE(a.metrics.loss_curve.size() == 60);
  CHECK(a.metrics.loss_curve == b.metrics.loss_curve);  // bitwise determinism
  CHECK(a.metrics.loss_curve.back() < a.metrics.loss_curve.front());
}

TEST_CASE("zero epochs returns the initialized model") {
  const LabeledDataset data = gen_ring_dataset(12, 3);
  ModelSpec spec;
  spec.arch = Arch::kGgnn;
  spec.hidden_dim = 6;
  spec.depth = 2;
  TrainConfig config;
  config.epochs = 0;
  const TrainedModel result = train(spec, data, config);
  CHECK(result.metrics.loss_curve.empty());
  CHECK(result.metrics.test_accuracy >= 0.0);
  CHECK(result.metrics.test_accuracy <= 1.0);
}

TEST_CASE("architecture and task must agree") {
  const LabeledDataset rings = gen_ring_dataset(8, 4);
  ModelSpec spec;
  spec.arch = Arch::kGcn;
  CHECK_THROWS_WITH_AS(train(spec, rings, TrainConfig{}),
                       doctest::Contains("graph-classification"), Error);
}

TEST_CASE("checkpoints reproduce forwards bit-identically") {
  const Graph g = random_graph(8, 5, 17);
  const GgnnModel m = random_ggnn(g.feature_dim(), 5, 2, 3, 170);
  const auto path = std::filesystem::temp_directory_path() / "grex_test_ckpt.json";
  save_checkpoint(path, m, {42, "unit"});
  const LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.info.training_seed == 42);
  CHECK(loaded.info.dataset == "unit");
  CHECK(loaded.model->arch_name() == "ggnn");
  CHECK(bit_equal(loaded.model->logits(g, uniform_weights(g, 1.0)),
                  ggnn_forward(m, g, uniform_weights(g, 1.0))));
  std::filesystem::remove(path);

  CHECK_THROWS_AS((void)load_checkpoint("/nonexistent/ckpt.json"), Error);
}

TEST_SUITE_END();
