/* Copyright 2026 The xft Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Serial reference kernels against their OpenMP counterparts at pipeline
// sizes (256px working resolution, 64x64 feature grid).

#include <benchmark/benchmark.h>

#include <random>

#include "xft/kernels.hpp"

using namespace xft;
namespace k = xft::kernels;

namespace {

Tensor random(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = d(rng);
  return t;
}

k::ConvGeometry geometry(std::size_t side, std::size_t in_c, std::size_t out_c) {
  k::ConvGeometry g;
  g.in_h = g.in_w = side;
  g.in_c = in_c;
  g.out_c = out_c;
  g.kernel = 3;
  g.stride = 2;
  g.pad = 1;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto g = geometry(side, 8, 16);
  const Tensor x = random({side, side, 8}, 1), w = random({16, 8, 3, 3}, 2), b = random({16}, 3);
  for (auto _ : state) {
    Tensor y = Parallel ? k::parallel::conv2d_forward(x, w, b, g) : k::serial::conv2d_forward(x, w, b, g);
    benchmark::DoNotOptimize(y.storage().data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto g = geometry(side, 8, 16);
  const Tensor x = random({side, side, 8}, 1), w = random({16, 8, 3, 3}, 2);
  const Tensor go = random({g.out_h(), g.out_w(), 16}, 4);
  for (auto _ : state) {
    auto r = Parallel ? k::parallel::conv2d_backward(x, w, go, g) : k::serial::conv2d_backward(x, w, go, g);
    benchmark::DoNotOptimize(r.weight.storage().data());
  }
}

template <bool Parallel>
void BM_Cosine(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random({n, 48}, 5), b = random({n, 48}, 6);
  for (auto _ : state) {
    Tensor m = Parallel ? k::parallel::cosine_matrix(a, b) : k::serial::cosine_matrix(a, b);
    benchmark::DoNotOptimize(m.storage().data());
  }
}

template <bool Parallel>
void BM_SoftmaxAggregate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor m = random({n, n}, 7), v = random({n, 3}, 8);
  for (auto _ : state) {
    Tensor r = Parallel ? k::parallel::softmax_aggregate(m, 100.0, v) : k::serial::softmax_aggregate(m, 100.0, v);
    benchmark::DoNotOptimize(r.storage().data());
  }
}

template <bool Parallel>
void BM_Gram(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random({n, 32}, 9);
  for (auto _ : state) {
    Tensor g = Parallel ? k::parallel::gram(a) : k::serial::gram(a);
    benchmark::DoNotOptimize(g.storage().data());
  }
}

template <bool Parallel>
void BM_Resize(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor x = random({side / 4, side / 4, 16}, 10);
  for (auto _ : state) {
    Tensor y = Parallel ? k::parallel::resize_bilinear(x, side, side) : k::serial::resize_bilinear(x, side, side);
    benchmark::DoNotOptimize(y.storage().data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Cosine<false>)->Name("cosine/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Cosine<true>)->Name("cosine/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_SoftmaxAggregate<false>)->Name("softmax_aggregate/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_SoftmaxAggregate<true>)->Name("softmax_aggregate/parallel")->Arg(256)->Arg(1024);
BENCHMARK(BM_Gram<false>)->Name("gram/serial")->Arg(4096)->Arg(16384);
BENCHMARK(BM_Gram<true>)->Name("gram/parallel")->Arg(4096)->Arg(16384);
BENCHMARK(BM_Resize<false>)->Name("resize_bilinear/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Resize<true>)->Name("resize_bilinear/parallel")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
