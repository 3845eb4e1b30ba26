#include <benchmark/benchmark.h>

#include "diunet/conv.hpp"
#include "diunet/layers.hpp"

namespace {

using diunet::ConvAlgorithm;
using diunet::DilatedConvSpec;
using diunet::Tensor;

template <typename T>
Tensor<T> random_tensor(const diunet::Shape& shape, std::uint64_t seed) {
  diunet::Rng rng(seed);
  std::normal_distribution<double> n;
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(n(rng));
  return t;
}

void BM_DilatedConv(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  const int dilation = static_cast<int>(state.range(1));
  const auto algo = static_cast<ConvAlgorithm>(state.range(2));
  const DilatedConvSpec spec{3, dilation, channels, channels};
  const auto c = static_cast<std::size_t>(channels);
  auto x = random_tensor<float>({16, 64, 64, c}, 1);
  auto w = random_tensor<float>(spec.weight_shape(), 2);
  Tensor<float> b({c});
  for (auto _ : state) {
    benchmark::DoNotOptimize(diunet::dilated_conv2d(x, w, b, spec, algo));
  }
  state.SetItemsProcessed(state.iterations() * 16 * 64 * 64 * 9 * channels * channels);
}
BENCHMARK(BM_DilatedConv)
    ->Args({8, 1, static_cast<int>(ConvAlgorithm::Direct)})
    ->Args({8, 1, static_cast<int>(ConvAlgorithm::Im2col)})
    ->Args({8, 3, static_cast<int>(ConvAlgorithm::Im2col)})
    ->Args({32, 2, static_cast<int>(ConvAlgorithm::Im2col)})
    ->Unit(benchmark::kMillisecond);

void BM_DilatedConvBackward(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  const DilatedConvSpec spec{3, 2, channels, channels};
  const auto c = static_cast<std::size_t>(channels);
  auto x = random_tensor<float>({16, 64, 64, c}, 1);
  auto w = random_tensor<float>(spec.weight_shape(), 2);
  auto g = random_tensor<float>({16, 64, 64, c}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(diunet::dilated_conv2d_backward(x, w, spec, g));
  }
}
BENCHMARK(BM_DilatedConvBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
