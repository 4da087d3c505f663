#include <benchmark/benchmark.h>

#include "grex/datasets.hpp"
#include "grex/models.hpp"
#include "grex/rng.hpp"

namespace {

grex::GcnModel make_gcn(int feature_dim, int hidden, int classes, int layers) {
  grex::GcnModel m(feature_dim, hidden, classes, layers);
  auto params = m.parameters();
  grex::Rng rng(1);
  for (auto& p : params) {
    for (double& v : p.data) v = rng.uniform(-0.5, 0.5);
  }
  m.set_parameters(params);
  return m;
}

void BM_GcnForwardBaShapes(benchmark::State& state) {
  const grex::LabeledDataset data = grex::gen_ba_shapes(1);
  const grex::Graph& g = data.graphs.front();
  const grex::GcnModel model = make_gcn(g.feature_dim(), 32, 4, 3);
  const grex::EdgeWeights ones = grex::uniform_weights(g, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grex::gcn_forward(model, g, ones));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GcnForwardBaShapes);

void BM_GcnForwardTraced(benchmark::State& state) {
  const grex::LabeledDataset data = grex::gen_ba_shapes(1);
  const grex::Graph& g = data.graphs.front();
  const grex::GcnModel model = make_gcn(g.feature_dim(), 32, 4, 3);
  const grex::EdgeWeights ones = grex::uniform_weights(g, 1.0);
  for (auto _ : state) {
    grex::Tape tape;
    grex::MessageTrace trace;
    grex::ForwardHooks hooks;
    hooks.tape = &tape;
    hooks.trace = &trace;
    benchmark::DoNotOptimize(grex::gcn_forward(model, g, ones, hooks));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GcnForwardTraced);

void BM_GgnnForwardRing(benchmark::State& state) {
  const grex::LabeledDataset data = grex::gen_ring_dataset(2, 1);
  const grex::Graph& g = data.graphs.front();
  grex::GgnnModel model(g.feature_dim(), 16, 2, 4);
  auto params = model.parameters();
  grex::Rng rng(2);
  for (auto& p : params) {
    for (double& v : p.data) v = rng.uniform(-0.5, 0.5);
  }
  model.set_parameters(params);
  const grex::EdgeWeights ones = grex::uniform_weights(g, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grex::ggnn_forward(model, g, ones));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GgnnForwardRing);

}  // namespace
