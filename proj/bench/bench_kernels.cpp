// Parallel kernels against the serial reference implementations they are
// tested against. Run: ./build/bench/sase_bench

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sase/kernels.hpp"
#include "sase/nn.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

void BM_GemmKernel(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    sase::kernels::gemm(sase::kernels::Trans::no, sase::kernels::Trans::no, n, n, n, a.data(), n,
                        b.data(), n, 0.0, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["FLOP/s"] = benchmark::Counter(2.0 * n * n * n,
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

void BM_GemmReference(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    sase::reference::gemm(false, false, n, n, n, a.data(), n, b.data(), n, 0.0, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["FLOP/s"] = benchmark::Counter(2.0 * n * n * n,
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

sase::Conv2dSpec bench_conv_spec(std::int64_t channels) {
  return sase::Conv2dSpec::same(channels, channels, 3);
}

// Multiply-adds counted twice, as for the gemm counters.
void set_conv_rate(benchmark::State& state, std::int64_t c, std::int64_t hw) {
  state.counters["FLOP/s"] = benchmark::Counter(2.0 * c * c * 9 * hw * hw,
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

void BM_Conv2dKernel(benchmark::State& state) {
  const std::int64_t c = state.range(0), hw = state.range(1);
  const auto spec = bench_conv_spec(c);
  const auto x = sase::Tensor::randn(sase::Shape{1, c, hw, hw}, 1);
  const auto w = sase::Tensor::randn(spec.weight_shape(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(sase::conv2d(x, w, sase::Tensor(), spec));
  set_conv_rate(state, c, hw);
}

void BM_Conv2dReference(benchmark::State& state) {
  const std::int64_t c = state.range(0), hw = state.range(1);
  const auto spec = bench_conv_spec(c);
  const auto x = sase::Tensor::randn(sase::Shape{1, c, hw, hw}, 1);
  const auto w = sase::Tensor::randn(spec.weight_shape(), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sase::conv2d_naive_oracle(x, w, sase::Tensor(), spec));
  }
  set_conv_rate(state, c, hw);
}

}  // namespace

BENCHMARK(BM_GemmKernel)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmReference)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dKernel)->Args({32, 28})->Args({64, 56})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dReference)->Args({32, 28})->Args({64, 56})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
