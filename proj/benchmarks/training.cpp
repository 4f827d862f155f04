#include <benchmark/benchmark.h>

#include <vector>

#include "coronet/model.hpp"
#include "coronet/rng.hpp"
#include "coronet/train.hpp"

using namespace coronet;

namespace {

// One forward/backward/Adam step of the mini model on a batch of 10 at 64 px.
void BM_MiniTrainStep(benchmark::State& state) {
  model::ArchitectureConfig arch;
  arch.variant = model::Variant::mini;
  arch.input_height = arch.input_width = 64;
  arch.seed = 1;
  Network net = model::build_coronet(arch);
  Rng rng(4);
  Tensor x(Shape{10, 64, 64, 3});
  for (float& v : x.values()) v = rng.uniform01();
  std::vector<std::size_t> labels(10);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 4;

  train::Adam adam(train::AdamHyper{});
  std::uint64_t step = 0;
  for (auto _ : state) {
    const ForwardTrace trace = net.forward(x, nn::Mode::train, ++step);
    const Gradients grads = net.backward_cross_entropy(trace, labels);
    net.apply_batch_statistics(trace);
    adam.step(net, grads);
  }
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_MiniTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
