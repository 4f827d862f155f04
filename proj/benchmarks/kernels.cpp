#include <benchmark/benchmark.h>

#include <vector>

#include "coronet/layers.hpp"
#include "coronet/rng.hpp"
#include "coronet/tensor.hpp"

using namespace coronet;

namespace {

Tensor noise(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (float& v : t.values()) v = rng.uniform(-1.0f, 1.0f);
  return t;
}

void BM_Gemm(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  Rng rng(1);
  std::vector<float> a(n * n), b(n * n), c(n * n);
  for (float& v : a) v = rng.uniform(-1, 1);
  for (float& v : b) v = rng.uniform(-1, 1);
  for (auto _ : state) {
    gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(2 * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

// 3x3 same conv, channels from the argument, on a 38x38 map (entry-flow size at 160 px).
void BM_Conv2D(benchmark::State& state) {
  const auto ch = std::size_t(state.range(0));
  Rng rng(2);
  const nn::Conv2D spec{ch, ch, 3, 3, 1, nn::Padding::same, false};
  const nn::LayerParams p = nn::make_params(spec, &rng);
  const Tensor x = noise(Shape{1, 38, 38, ch}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, spec, p));
}
BENCHMARK(BM_Conv2D)->Arg(16)->Arg(64);

// Middle-flow shape: 728 channels on a 10x10 map.
void BM_SeparableConv2D(benchmark::State& state) {
  const auto ch = std::size_t(state.range(0));
  Rng rng(3);
  const nn::SeparableConv2D spec{ch, ch, 3, 3, 1, nn::Padding::same, false};
  const nn::LayerParams p = nn::make_params(spec, &rng);
  const Tensor x = noise(Shape{1, 10, 10, ch}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::separable_conv2d_forward(x, spec, p));
}
BENCHMARK(BM_SeparableConv2D)->Arg(91)->Arg(728);

}  // namespace
