#include <benchmark/benchmark.h>

#include "stripereid/losses.hpp"
#include "stripereid/network.hpp"

using namespace stripereid;

namespace {

net::ModelConfig config(net::Variant variant) {
  net::ModelConfig c;
  c.num_classes = 8;
  c.variant = variant;
  return c;
}

}  // namespace

static void BM_TrainStep(benchmark::State& state) {
  net::Model model(config(static_cast<net::Variant>(state.range(0))));
  const Tensor images = Tensor::randn({16, 3, 64, 32}, 7);
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < 16; ++i) labels.push_back(i / 4);
  const net::LossConfig loss_cfg;
  for (auto _ : state) {
    model.zero_grad();
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = net::total_loss(model.forward(images, 1), labels, loss_cfg).total;
    }
    tape.backward(loss);
  }
  state.SetLabel(std::string(net::to_string(model.variant())));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(net::Variant::full))
    ->Arg(static_cast<int>(net::Variant::baseline_bdb))
    ->Unit(benchmark::kMillisecond);

static void BM_InferenceEmbed(benchmark::State& state) {
  net::Model model(config(net::Variant::full));
  model.set_mode(Mode::eval);
  const Tensor images = Tensor::randn({32, 3, 64, 32}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(model.inference_embed(images));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_InferenceEmbed)->Unit(benchmark::kMillisecond);
