#include <benchmark/benchmark.h>

#include "stripereid/ops.hpp"
#include "stripereid/topdrop.hpp"

using namespace stripereid;

static void BM_Conv2d3x3(benchmark::State& state) {
  const auto c = state.range(0);
  const Tensor x = Tensor::randn({8, c, 16, 8}, 1);
  const Tensor w = Tensor::randn({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 8 * c * c * 9 * 16 * 8);
}
BENCHMARK(BM_Conv2d3x3)->Arg(16)->Arg(32)->Arg(64);

static void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor a = Tensor::randn({n, n}, 1);
  const Tensor b = Tensor::randn({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

static void BM_TopDropMask(benchmark::State& state) {
  const topdrop::FeatureShape shape{64, 8, 4};
  const Tensor f = Tensor::randn({32, shape.channels, shape.height, shape.width}, 3);
  const topdrop::DropConfig cfg;
  for (auto _ : state) {
    for (std::int64_t i = 0; i < 32; ++i) {
      const auto begin = f.values().begin() + i * shape.numel();
      const std::vector<double> one(begin, begin + shape.numel());
      benchmark::DoNotOptimize(topdrop::top_drop_mask(topdrop::stripe_relevance(topdrop::activation_map(one, shape, cfg.p)), cfg, shape));
    }
  }
}
BENCHMARK(BM_TopDropMask);
