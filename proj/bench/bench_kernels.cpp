// Serial reference vs OpenMP/GEMM kernels at the desk model's layer sizes.

#include <benchmark/benchmark.h>

#include <random>

#include "sgg/nn/kernels.hpp"
#include "sgg/nn/parameters.hpp"
#include "sgg/surface.hpp"

using namespace sgg::nn;

namespace {

struct ConvCase {
  Tensor<float> x, w, b, dy;
  kernels::ConvSpec spec;
};

ConvCase make_case(const benchmark::State& state) {
  std::mt19937_64 rng(0);
  const int n = static_cast<int>(state.range(0));
  const int c = static_cast<int>(state.range(1));
  const int h = static_cast<int>(state.range(2));
  const int w = h / 2;
  ConvCase cc;
  cc.x = random_normal<float>({n, c, h, w}, rng);
  cc.w = random_normal<float>({c, c, 3, 3}, rng);
  cc.b = random_normal<float>({1, c, 1, 1}, rng);
  cc.dy = random_normal<float>({n, c, h, w}, rng);
  cc.spec.gain = 1.0 / std::sqrt(9.0 * c);
  return cc;
}

void set_flops(benchmark::State& state, double per_iter) {
  state.counters["GFLOP/s"] =
      benchmark::Counter(per_iter * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

double conv_flops(const benchmark::State& s) {
  const double n = s.range(0), c = s.range(1), h = s.range(2);
  return 2.0 * n * c * c * 9 * h * (h / 2);
}

void BM_ConvForwardReference(benchmark::State& state) {
  auto cc = make_case(state);
  Tensor<float> y;
  for (auto _ : state) {
    kernels::conv2d_forward_reference(cc.x, cc.w, &cc.b, cc.spec, y);
    benchmark::DoNotOptimize(y.data());
  }
  set_flops(state, conv_flops(state));
}

void BM_ConvForward(benchmark::State& state) {
  auto cc = make_case(state);
  Tensor<float> y;
  for (auto _ : state) {
    kernels::conv2d_forward(cc.x, cc.w, &cc.b, cc.spec, y);
    benchmark::DoNotOptimize(y.data());
  }
  set_flops(state, conv_flops(state));
}

void BM_ConvBackwardReference(benchmark::State& state) {
  auto cc = make_case(state);
  Tensor<float> dx(cc.x.shape()), dw(cc.w.shape()), db(cc.b.shape());
  for (auto _ : state) {
    kernels::conv2d_backward_input_reference(cc.dy, cc.w, cc.spec, dx);
    kernels::conv2d_backward_params_reference(cc.x, cc.dy, cc.spec, dw, &db);
    benchmark::DoNotOptimize(dx.data());
  }
  set_flops(state, 2 * conv_flops(state));
}

void BM_ConvBackward(benchmark::State& state) {
  auto cc = make_case(state);
  Tensor<float> dx(cc.x.shape()), dw(cc.w.shape()), db(cc.b.shape());
  for (auto _ : state) {
    kernels::conv2d_backward_input(cc.dy, cc.w, cc.spec, dx);
    kernels::conv2d_backward_params(cc.x, cc.dy, cc.spec, dw, &db);
    benchmark::DoNotOptimize(dx.data());
  }
  set_flops(state, 2 * conv_flops(state));
}

void BM_InstanceNormReference(benchmark::State& state) {
  auto cc = make_case(state);
  Tensor<float> y;
  std::vector<float> s;
  for (auto _ : state) {
    kernels::instance_norm_forward_reference(cc.x, 1e-8, y, s);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_InstanceNorm(benchmark::State& state) {
  auto cc = make_case(state);
  Tensor<float> y;
  std::vector<float> s;
  for (auto _ : state) {
    kernels::instance_norm_forward(cc.x, 1e-8, y, s);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_Discretize(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  auto table = sgg::VertexTable::random(k, 1);
  sgg::EmbeddingRaster r(64, 32);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n;
  for (auto& v : r.data) v = n(rng);
  std::fill(r.valid.begin(), r.valid.end(), 1);
  for (auto _ : state) {
    auto d = sgg::discretize(r, table);
    benchmark::DoNotOptimize(d.data.data());
  }
}

// (batch, channels, height) with width = height / 2
#define CONV_ARGS ->Args({8, 32, 64})->Args({8, 64, 32})->Args({8, 128, 16})->Unit(benchmark::kMillisecond)

BENCHMARK(BM_ConvForwardReference)->Args({2, 32, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward) CONV_ARGS;
BENCHMARK(BM_ConvBackwardReference)->Args({2, 32, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward) CONV_ARGS;
BENCHMARK(BM_InstanceNormReference) CONV_ARGS;
BENCHMARK(BM_InstanceNorm) CONV_ARGS;
BENCHMARK(BM_Discretize)->Arg(1024)->Arg(27000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
