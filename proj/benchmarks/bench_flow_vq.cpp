#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "trinity/flow/flow.hpp"
#include "trinity/vq/codebook.hpp"

namespace flow = trinity::flow;
namespace vq = trinity::vq;

static flow::Image Pattern(std::size_t n, double shift) {
  flow::Image img(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double xs = static_cast<double>(x) - shift;
      img.at(y, x) = 0.5 * std::sin(xs / 5.0) * std::cos(static_cast<double>(y) / 6.0);
    }
  }
  return img;
}

static void BM_ComputeFlow(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = Pattern(n, 0.0);
  auto b = Pattern(n, 2.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(flow::compute_flow(a, b));
  }
}
BENCHMARK(BM_ComputeFlow)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_Quantize(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> entries(m * 25);
  for (double& v : entries) v = u(rng);
  vq::Codebook book(m, 25, entries);
  std::vector<double> feature(25);
  for (double& v : feature) v = u(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vq::error_code(feature, book));
  }
}
BENCHMARK(BM_Quantize)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
