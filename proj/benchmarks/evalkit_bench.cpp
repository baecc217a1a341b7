#include <benchmark/benchmark.h>

#include <random>

#include "claimsrisk/evalkit.hpp"

using namespace claimsrisk;

namespace {

ScoredSet random_set(std::size_t n) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScoredSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(u(rng));
    s.labels.push_back(u(rng) < 0.1 ? 1 : 0);
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

void BM_RocAuc(benchmark::State& state) {
  const auto s = random_set(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s));
  state.SetComplexityN(state.range(0));
}

void BM_RocCurve(benchmark::State& state) {
  const auto s = random_set(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(roc_curve(s));
}

}  // namespace

BENCHMARK(BM_RocAuc)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);
BENCHMARK(BM_RocCurve)->RangeMultiplier(10)->Range(100, 100000);
