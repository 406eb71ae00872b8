#include <benchmark/benchmark.h>

#include <numbers>

#include "specklenet/analysis.hpp"
#include "specklenet/fft.hpp"
#include "specklenet/model/network.hpp"
#include "specklenet/nn/layers.hpp"
#include "specklenet/nn/loss.hpp"
#include "specklenet/optics.hpp"
#include "specklenet/rng.hpp"

using namespace specklenet;
using nn::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<std::size_t> dims, std::uint64_t seed) {
  Tensor<T> t(std::move(dims));
  Rng r(seed);
  for (auto& v : t.values()) v = static_cast<T>(r.normal());
  return t;
}

optics::SystemConfig sized(std::size_t grid) {
  optics::SystemConfig c;
  c.grid_size = grid;
  c.object_region = grid / 2;
  return c;
}

void BM_Fft2D(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Grid2D<fft::Complex> g(n, n, fft::Complex(1.0, 0.5));
  for (auto _ : state) {
    fft::forward(g);
    fft::inverse(g);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_Fft2D)->Arg(128)->Arg(256)->Arg(512);

void BM_SimulateSpeckle(benchmark::State& state) {
  const auto c = sized(static_cast<std::size_t>(state.range(0)));
  const auto d = optics::generate_diffuser(c, 63.0, 2 * std::numbers::pi, 1);
  const auto lit = optics::uniform_illumination(c);
  for (auto _ : state) benchmark::DoNotOptimize(optics::simulate_speckle(lit, d, c));
}
BENCHMARK(BM_SimulateSpeckle)->Arg(128)->Arg(256);

void BM_GenerateDiffuser(benchmark::State& state) {
  const auto c = sized(static_cast<std::size_t>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(optics::generate_diffuser(c, 63.0, 2 * std::numbers::pi, ++seed));
}
BENCHMARK(BM_GenerateDiffuser)->Arg(128)->Arg(256);

void BM_ConvForward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor<float>({16, 24, s, s}, 1), w = random_tensor<float>({8, 24, 3, 3}, 2);
  const Tensor<float> b({8});
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, w, b));
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(32)->Arg(64);

void BM_ConvBackward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor<float>({16, 24, s, s}, 1), w = random_tensor<float>({8, 24, 3, 3}, 2);
  const auto dy = random_tensor<float>({16, 8, s, s}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(x, w, dy));
}
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(32)->Arg(64);

model::ArchSpec bench_arch(std::size_t input) {
  model::ArchSpec a;
  a.input_size = input;
  a.encoder_blocks = a.decoder_blocks = 3;
  a.layers_per_block = 2;
  a.growth = 8;
  a.stem_channels = 8;
  return a;
}

void BM_NetworkInfer(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const model::DenseUNet<float> net(bench_arch(s), model::Task::binary, 1);
  const auto x = random_tensor<float>({16, 1, s, s}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(x));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_NetworkInfer)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_NetworkTrainStep(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  model::DenseUNet<float> net(bench_arch(s), model::Task::binary, 1);
  const auto x = random_tensor<float>({16, 1, s, s}, 2);
  Tensor<float> y(16, 2, s, s);
  for (std::size_t i = 0; i < y.size() / 2; ++i) y[i] = (i % 7 == 0) ? 1.0f : 0.0f;
  for (auto _ : state) {
    net.zero_grad();
    const auto loss = nn::cross_entropy_loss(net.forward_train(x), y);
    net.backward(loss.grad);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_NetworkTrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_CrossCorrelationMap(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Grid2D<double> a(n, n), b(n, n);
  Rng r(3);
  for (auto& v : a.values()) v = r.uniform();
  for (auto& v : b.values()) v = r.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(analysis::cross_correlation_map(a, b));
}
BENCHMARK(BM_CrossCorrelationMap)->Arg(64)->Arg(128);

}  // namespace
BENCHMARK_MAIN();
