#include <benchmark/benchmark.h>

#include "grex/explain.hpp"
#include "grex/rng.hpp"

namespace {

void BM_LassoFit(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  grex::Rng rng(3);
  grex::Tensor x(m, n);
  for (double& v : x.data) v = rng.bernoulli(0.3) ? rng.uniform01() : 1.0;
  std::vector<double> truth(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; j += 7) truth[static_cast<std::size_t>(j)] = rng.uniform(-1.0, 1.0);
  std::vector<double> y(static_cast<std::size_t>(m), 0.0);
  for (int k = 0; k < m; ++k) {
    for (int j = 0; j < n; ++j) y[static_cast<std::size_t>(k)] += truth[static_cast<std::size_t>(j)] * x(k, j);
  }
  const std::vector<double> weights(static_cast<std::size_t>(m), 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grex::fit_lasso(x, y, weights, 0.01));
  }
}
BENCHMARK(BM_LassoFit)->Args({500, 20})->Args({2000, 500})->Args({2000, 2000});

}  // namespace
