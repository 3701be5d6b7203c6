#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "closp/ndmath/kernels.hpp"

namespace k = closp::nd::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

k::Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? k::Exec::reference : k::Exec::parallel;
}

void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    k::gemm(exec_of(state), false, true, n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

k::ConvGeometry geometry(std::size_t side) {
  k::ConvGeometry g;
  g.batch = 32;
  g.in_channels = 8;
  g.in_height = g.in_width = side;
  g.out_channels = 16;
  g.kernel = 3;
  g.padding = 1;
  return g;
}

void BM_conv_forward(benchmark::State& state) {
  const auto g = geometry(static_cast<std::size_t>(state.range(1)));
  const auto x = noise(g.batch * g.in_channels * g.in_height * g.in_width, 3);
  const auto w = noise(g.out_channels * g.in_channels * g.kernel * g.kernel, 4);
  const auto bias = noise(g.out_channels, 5);
  std::vector<double> y(g.batch * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    k::conv2d_forward(exec_of(state), g, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_conv_backward(benchmark::State& state) {
  const auto g = geometry(static_cast<std::size_t>(state.range(1)));
  const auto x = noise(g.batch * g.in_channels * g.in_height * g.in_width, 3);
  const auto w = noise(g.out_channels * g.in_channels * g.kernel * g.kernel, 4);
  const auto gy = noise(g.batch * g.out_channels * g.out_height() * g.out_width(), 6);
  std::vector<double> gx(x.size()), gw(w.size()), gb(g.out_channels);
  for (auto _ : state) {
    k::conv2d_backward_input(exec_of(state), g, gy, w, gx);
    k::conv2d_backward_weight(exec_of(state), g, gy, x, gw, gb);
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

void BM_inner_products(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  const std::size_t d = 64;
  const auto rows = noise(n * d, 7), q = noise(d, 8);
  std::vector<double> scores(n);
  for (auto _ : state) {
    k::inner_products(exec_of(state), n, d, rows, q, scores);
    benchmark::DoNotOptimize(scores.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

// first argument: 0 = serial reference, 1 = OpenMP
BENCHMARK(BM_gemm)->ArgsProduct({{0, 1}, {64, 256}});
BENCHMARK(BM_conv_forward)->ArgsProduct({{0, 1}, {16, 32}});
BENCHMARK(BM_conv_backward)->ArgsProduct({{0, 1}, {16, 32}});
BENCHMARK(BM_inner_products)->ArgsProduct({{0, 1}, {10000, 100000}});

BENCHMARK_MAIN();
