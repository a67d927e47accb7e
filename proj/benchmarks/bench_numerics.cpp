#include <benchmark/benchmark.h>

#include <random>

#include "trinity/numerics/layers.hpp"
#include "trinity/numerics/tensor.hpp"

namespace nn = trinity::nn;

static nn::Tensor RandomTensor(nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(nn::shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return nn::Tensor::from_data(std::move(shape), std::move(v), true);
}

static void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = RandomTensor({n, n}, 1);
  auto b = RandomTensor({n, n}, 2);
  for (auto _ : state) {
    nn::backward(nn::sum(nn::matmul(a, b)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(3 * n * n * n));
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(64)->Arg(128);

static void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = RandomTensor({8, c, 64, 64}, 3);
  auto w = RandomTensor({c, c, 3, 3}, 4);
  auto b = RandomTensor({c}, 5);
  for (auto _ : state) {
    nn::backward(nn::sum(nn::conv2d(x, w, b, 1, 1)));
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_TransformerBlock(benchmark::State& state) {
  nn::ParameterStore store(1);
  nn::TransformerBlock block(store, "blk", 64, 8, 128);
  auto x = RandomTensor({8, 17, 64}, 6);
  for (auto _ : state) {
    nn::backward(nn::sum(block(x)));
  }
}
BENCHMARK(BM_TransformerBlock)->Unit(benchmark::kMillisecond);
