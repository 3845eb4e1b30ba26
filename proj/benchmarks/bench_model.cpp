#include <benchmark/benchmark.h>

#include "diunet/metrics.hpp"
#include "diunet/model.hpp"

namespace {

using diunet::ForwardOptions;
using diunet::Phase;
using diunet::Tape;
using diunet::Tensor;

// One optimisation step's worth of work (forward, Dice loss, backward) at
// the desk-scale configuration used for cross-validation.
void BM_TrainStep(benchmark::State& state) {
  diunet::ModelConfig cfg;
  cfg.depth = 3;
  cfg.base_filters = 8;
  cfg.height = cfg.width = 64;
  cfg.variant = state.range(0) == 0 ? diunet::Variant::Dilated : diunet::Variant::Baseline;
  auto model = diunet::Model<float>(cfg, 7);
  const std::size_t batch = 16;
  diunet::Rng rng(1);
  std::normal_distribution<double> n;
  Tensor<float> x({batch, 64, 64, 4});
  for (auto& v : x.data()) v = static_cast<float>(n(rng));
  Tensor<float> target({batch, 64, 64, 3});
  for (std::size_t i = 0; i < target.size(); i += 7) target[i] = 1.0f;
  for (auto _ : state) {
    Tape<float> tape;
    auto probs = model.forward(tape, tape.constant(x), ForwardOptions{Phase::Train, true});
    auto loss = diunet::ad::dice_loss(tape, probs, target, diunet::kLossSmoothing);
    benchmark::DoNotOptimize(tape.backward(loss));
  }
  state.SetLabel(diunet::to_string(cfg.variant));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
