#include <benchmark/benchmark.h>

#include "grex/datasets.hpp"
#include "grex/explain.hpp"
#include "grex/rng.hpp"

namespace {

struct RingSetup {
  grex::LabeledDataset data = grex::gen_ring_dataset(2, 7);
  grex::GgnnModel model;
  RingSetup() {
    model = grex::GgnnModel(data.graphs.front().feature_dim(), 16, 2, 4);
    auto params = model.parameters();
    grex::Rng rng(4);
    for (auto& p : params) {
      for (double& v : p.data) v = rng.uniform(-0.5, 0.5);
    }
    model.set_parameters(params);
  }
};

void BM_ExplainSaliency(benchmark::State& state) {
  const RingSetup setup;
  const grex::TargetSpec target{-1, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        grex::explain_saliency(setup.model, setup.data.graphs.front(), target));
  }
}
BENCHMARK(BM_ExplainSaliency);

void BM_ExplainRemoval(benchmark::State& state) {
  const RingSetup setup;
  const grex::TargetSpec target{-1, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        grex::explain_removal(setup.model, setup.data.graphs.front(), target));
  }
}
BENCHMARK(BM_ExplainRemoval);

void BM_ExplainLime(benchmark::State& state) {
  const RingSetup setup;
  const grex::TargetSpec target{-1, 1};
  grex::LimeConfig cfg;
  cfg.m = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        grex::explain_lime(setup.model, setup.data.graphs.front(), target, cfg));
  }
}
BENCHMARK(BM_ExplainLime)->Arg(100)->Arg(500);

}  // namespace
