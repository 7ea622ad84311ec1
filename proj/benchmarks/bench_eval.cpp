#include <benchmark/benchmark.h>

#include "stripereid/eval.hpp"
#include "stripereid/rng.hpp"

using namespace stripereid;

namespace {

eval::EmbeddingSet random_set(std::int64_t n, std::int64_t dim, std::uint64_t seed, std::int64_t camera) {
  SplitMix64 rng(seed);
  eval::EmbeddingSet s;
  s.dim = dim;
  std::vector<double> f(static_cast<std::size_t>(dim));
  for (std::int64_t i = 0; i < n; ++i) {
    for (auto& v : f) v = rng.normal();
    s.append(f, i % 32, camera);
  }
  return s;
}

}  // namespace

static void BM_Evaluate(benchmark::State& state) {
  const auto q = random_set(64, 256, 1, 0);
  const auto g = random_set(state.range(0), 256, 2, 1);
  const auto d = eval::pairwise_euclidean(q, g);
  for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate(d, q, g, 10));
}
BENCHMARK(BM_Evaluate)->Arg(192)->Arg(1024);

static void BM_Rerank(benchmark::State& state) {
  const auto q = random_set(64, 256, 1, 0);
  const auto g = random_set(state.range(0), 256, 2, 1);
  const auto params = eval::RerankParams{}.scaled_for(g.size());
  for (auto _ : state) benchmark::DoNotOptimize(eval::rerank(q, g, params));
}
BENCHMARK(BM_Rerank)->Arg(192)->Arg(512)->Unit(benchmark::kMillisecond);
