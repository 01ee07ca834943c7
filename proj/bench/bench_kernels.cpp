// Copyright 2026 The PIM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference kernels against the OpenMP/im2col ones, on the shapes of
// the default 64px backbone at batch 8.

#include <benchmark/benchmark.h>

#include <vector>

#include "pim/kernels.hpp"
#include "pim/rng.hpp"

namespace {

using pim::kernels::Conv2dGeometry;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  pim::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.uniform(-1, 1));
  return v;
}

// (in, out, size, stride) of each conv in the default backbone.
const Conv2dGeometry kConvs[] = {
    {8, 3, 64, 64, 16, 3, 3, 2, 1},  {8, 16, 32, 32, 16, 3, 3, 1, 1}, {8, 16, 32, 32, 32, 3, 3, 2, 1},
    {8, 32, 16, 16, 32, 3, 3, 1, 1}, {8, 32, 16, 16, 64, 3, 3, 2, 1}, {8, 64, 8, 8, 64, 3, 3, 1, 1},
};

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      pim::kernels::omp::matmul<float>(a, b, c, n, n, n);
    else
      pim::kernels::serial::matmul<float>(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * double(n * n * n), benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const Conv2dGeometry& g = kConvs[state.range(0)];
  const auto x = random_values(g.batch * g.in_channels * g.height * g.width, 3);
  const auto w = random_values(g.out_channels * g.patch_size(), 4);
  const std::vector<float> bias(g.out_channels, 0.1f);
  std::vector<float> y(g.batch * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    if constexpr (Parallel)
      pim::kernels::omp::conv2d_forward<float>(g, x, w, bias, y);
    else
      pim::kernels::serial::conv2d_forward<float>(g, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetLabel(std::to_string(g.in_channels) + "->" + std::to_string(g.out_channels) + " @" +
                 std::to_string(g.height) + " s" + std::to_string(g.stride));
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const Conv2dGeometry& g = kConvs[state.range(0)];
  const auto x = random_values(g.batch * g.in_channels * g.height * g.width, 5);
  const auto w = random_values(g.out_channels * g.patch_size(), 6);
  const auto dy = random_values(g.batch * g.out_channels * g.out_height() * g.out_width(), 7);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    std::fill(dx.begin(), dx.end(), 0.0f);
    std::fill(dw.begin(), dw.end(), 0.0f);
    std::fill(db.begin(), db.end(), 0.0f);
    if constexpr (Parallel)
      pim::kernels::omp::conv2d_backward<float>(g, x, w, dy, dx, dw, db);
    else
      pim::kernels::serial::conv2d_backward<float>(g, x, w, dy, dx, dw, db);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetLabel(std::to_string(g.in_channels) + "->" + std::to_string(g.out_channels) + " @" +
                 std::to_string(g.height) + " s" + std::to_string(g.stride));
}

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->DenseRange(0, 5)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/omp")->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
