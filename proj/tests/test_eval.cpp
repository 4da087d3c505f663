#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "grex/eval.hpp"
#include "rigged_model.hpp"
#include "test_util.hpp"

using namespace grex;
using grex::testing::cycle_graph;
using grex::testing::random_tensor;
using grex::testing::RiggedLinearModel;

namespace {

Explanation explanation_with(std::vector<double> importance) {
  Explanation e;
  e.importance = std::move(importance);
  return e;
}

GcnModel small_gcn(int feature_dim, std::uint64_t seed) {
  GcnModel m(feature_dim, 4, 2, 2);
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = random_tensor(params[i].rows, params[i].cols, seed + i, -0.7, 0.7);
  }
  m.set_parameters(params);
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("recall arithmetic") {
  const Explanation e = explanation_with({9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
  CHECK(recall_at_k(e, {0, 1, 2, 3, 4}, 5) == 1.0);
  CHECK(recall_at_k(e, {7, 8, 9}, 5) == 0.0);
  CHECK(recall_at_k(e, {0, 1, 2, 3, 4, 5}, 5) == doctest::Approx(5.0 / 6.0));
  CHECK_THROWS_AS((void)recall_at_k(e, {}, 5), Error);
}

TEST_CASE("recall is monotone in k") {
  const Explanation e = explain_random(cycle_graph(15), 3);
  const std::vector<EdgeId> truth = {1, 4, 7, 9};
  double prev = 0.0;
  for (int k = 1; k <= 15; ++k) {
    const double r = recall_at_k(e, truth, k);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("removal curve on a rigged model drops by the removed coefficients") {
  const int n = 9;
  const Graph g = cycle_graph(n);
  std::vector<double> c(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = (n - i) / 32.0;  // dyadic
  const RiggedLinearModel model(c);
  Explanation e;
  e.importance = c;

  ForwardCounter counter;
  const auto curve = removal_curve(model, g, e, TargetSpec{-1, 0}, 5, &counter);
  REQUIRE(curve.size() == 6);
  CHECK(counter.count() == 6);  // K + 1 forwards
  double removed = 0.0;
  for (int k = 0; k <= 5; ++k) {
    if (k > 0) removed += c[static_cast<std::size_t>(k - 1)];  // top-k = ids 0..k-1
    CHECK(curve[static_cast<std::size_t>(k)] == doctest::Approx(curve[0] - removed).epsilon(1e-12));
  }

  CHECK_THROWS_AS(
      (void)removal_curve(model, cycle_graph(3), explanation_with({1, 2, 3}), TargetSpec{-1, 0}, 5),
      Error);
}

TEST_CASE("curve is flat when the explanation points away from the target") {
  // two components; the target sits in the first, importances in the second
  const Graph g = build_graph(8, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {3, 7}},
                              random_tensor(8, 3, 41));
  const GcnModel m = small_gcn(3, 600);
  Explanation e;
  e.importance.assign(static_cast<std::size_t>(g.num_edges()), 0.0);
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    if (g.edge(i).u >= 3) e.importance[static_cast<std::size_t>(i)] = 1.0 + i;
  }
  const auto curve = removal_curve(m, g, e, TargetSpec{0, 0}, 5);
  for (double y : curve) CHECK(y == doctest::Approx(curve[0]).epsilon(1e-12));
}

TEST_CASE("auc of the drop curve") {
  CHECK(auc_edge({1.0, 1.0, 1.0, 1.0, 1.0, 1.0}) == 0.0);
  CHECK(auc_edge({1.0, 0.5, 0.5, 0.5, 0.5, 0.5}) == doctest::Approx(2.25).epsilon(1e-15));
  CHECK(auc_edge({3.0, 2.0, 1.5, 1.25, 1.0, 0.5}) > 0.0);
  CHECK_THROWS_AS((void)auc_edge({1.0}), Error);

  SUBCASE("invariant under constant shifts") {
    const std::vector<double> curve = {0.9, 0.4, 0.3, 0.1, -0.2, -0.5};
    std::vector<double> shifted = curve;
    for (double& y : shifted) y += 17.25;
    CHECK(auc_edge(curve) == doctest::Approx(auc_edge(shifted)).epsilon(1e-12));
  }
}

TEST_CASE("benchmark rows, counters, and determinism") {
  BaShapesParams params;
  params.base_nodes = 30;
  params.num_houses = 5;
  params.attachment = 3;
  params.feature_dim = 4;
  const LabeledDataset data = gen_ba_shapes(3, params);
  ModelSpec mspec;
  mspec.arch = Arch::kGcn;
  mspec.hidden_dim = 8;
  mspec.depth = 3;
  TrainConfig tconf;
  tconf.learning_rate = 0.1;
  tconf.epochs = 120;
  tconf.seed = 2;
  const TrainedModel trained = train(mspec, data, tconf);

  BenchmarkSpec spec;
  spec.metric = MetricKind::kRecall;
  spec.k = 5;
  spec.seeds = {1, 2};
  spec.max_targets = 10;
  spec.lime.m = 40;  // keep the unit run fast

  const EvalReport report = run_benchmark(*trained.model, data, spec);
  CHECK(report.rows.size() == 2 * 5);  // seeds x methods

  std::set<std::tuple<Method, std::string, std::uint64_t>> combos;
  for (const EvalRow& row : report.rows) {
    CHECK(combos.insert({row.method, row.metric, row.seed}).second);
    CHECK(row.metric == "recall@5");
    switch (row.method) {
      case Method::kLime:
        CHECK(row.forward_passes == doctest::Approx(40.0));
        break;
      case Method::kSaliency:
      case Method::kGradCam:
        CHECK(row.forward_passes == doctest::Approx(1.0));
        break;
      case Method::kRemoval:
        CHECK(row.forward_passes ==
              doctest::Approx(static_cast<double>(data.graphs.front().num_edges() + 1)));
        break;
      case Method::kRandom:
        CHECK(row.forward_passes == 0.0);
        break;
    }
  }

  SUBCASE("job count does not change the report bytes") {
    BenchmarkSpec par = spec;
    par.jobs = 4;
    const EvalReport threaded = run_benchmark(*trained.model, data, par);
    std::ostringstream a, b;
    report.write_csv(a);
    threaded.write_csv(b);
    CHECK(a.str() == b.str());
  }
}

TEST_CASE("random recall in the benchmark matches the hypergeometric expectation") {
  BaShapesParams params;
  params.base_nodes = 40;
  params.num_houses = 8;
  params.attachment = 3;
  params.feature_dim = 4;
  const LabeledDataset data = gen_ba_shapes(9, params);
  ModelSpec mspec;
  mspec.arch = Arch::kGcn;
  mspec.hidden_dim = 8;
  mspec.depth = 3;
  TrainConfig tconf;
  tconf.learning_rate = 0.1;
  tconf.epochs = 150;
  tconf.seed = 5;
  const TrainedModel trained = train(mspec, data, tconf);

  BenchmarkSpec spec;
  spec.methods = {Method::kRandom};
  spec.metric = MetricKind::kRecall;
  spec.k = 5;
  spec.max_targets = 40;
  spec.seeds.clear();
  for (std::uint64_t s = 0; s < 25; ++s) spec.seeds.push_back(s);

  const EvalReport report = run_benchmark(*trained.model, data, spec);
  const int n_edges = data.graphs.front().num_edges();
  const double p = 6.0 / n_edges;
  const double expected = 5.0 * p / 6.0;
  const double var_hits = 5.0 * p * (1.0 - p) * (n_edges - 5) / (n_edges - 1);
  double mean = 0.0;
  for (const auto& detail : report.details) mean += detail.value;
  mean /= static_cast<double>(report.details.size());
  const double sigma = std::sqrt(var_hits / 36.0 / static_cast<double>(report.details.size()));
  CHECK(std::abs(mean - expected) < 3.0 * sigma);
}

TEST_CASE("benchmark validates its inputs") {
  const LabeledDataset rings = gen_ring_dataset(6, 1);
  const RiggedLinearModel model({0.1});
  BenchmarkSpec spec;
  spec.methods = {};
  CHECK_THROWS_AS((void)run_benchmark(model, rings, spec), Error);

  BaShapesParams params;
  params.base_nodes = 20;
  params.num_houses = 2;
  params.attachment = 2;
  const LabeledDataset nodes = gen_ba_shapes(1, params);
  BenchmarkSpec ok;
  CHECK_THROWS_AS((void)run_benchmark(model, nodes, ok), Error);  // task mismatch
}

TEST_CASE("csv layout is stable") {
  EvalReport report;
  EvalRow row;
  row.method = Method::kLime;
  row.dataset = "rings";
  row.task = Task::kGraphClassification;
  row.metric = "recall@6";
  row.value = 0.75;
  row.seed = 3;
  row.forward_passes = 500;
  row.wall_time_ms = 123.4;
  report.rows.push_back(row);

  std::ostringstream out;
  report.write_csv(out);
  CHECK(out.str() ==
        "method,dataset,task,metric,value,seed,forward_passes,wall_time_ms\n"
        "lime,rings,graph-classification,recall@6,0.75,3,500.0,0.0\n");

  std::ostringstream timed;
  report.write_csv(timed, true);
  CHECK(timed.str().find("123.4") != std::string::npos);
}

TEST_SUITE_END();
