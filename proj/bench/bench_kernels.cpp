/*
 *   Copyright 2026 The mcout Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "mcout/kernels.hpp"
#include "mcout/random.hpp"

namespace {

using namespace mcout;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

template <bool Parallel>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  kernels::GemmShape s{8, n, n, n, n * n, n * n, n * n};
  const auto a = random_values(8 * n * n, 1), b = random_values(8 * n * n, 2);
  std::vector<double> c(8 * n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::gemm_nn(s, a.data(), b.data(), c.data(), false);
    else
      kernels::serial::gemm_nn(s, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(8 * n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 128;
  const auto x = random_values(rows * n, 3);
  std::vector<double> y(rows * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::softmax_rows(x, y, rows, n);
    else
      kernels::serial::softmax_rows(x, y, rows, n);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64;
  const auto x = random_values(rows * dim, 4);
  const std::vector<double> gain(dim, 1.0), bias(dim, 0.0);
  std::vector<double> y(rows * dim), xhat(rows * dim), rstd(rows);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::layer_norm_rows(x, gain, bias, y, xhat, rstd, rows, dim, 1e-5);
    else
      kernels::serial::layer_norm_rows(x, gain, bias, y, xhat, rstd, rows, dim, 1e-5);
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(BM_GemmNN<false>)->Name("gemm_nn/serial")->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_GemmNN<true>)->Name("gemm_nn/openmp")->Arg(32)->Arg(64)->Arg(128)->UseRealTime();
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Arg(1024)->Arg(16384);
BENCHMARK(BM_Softmax<true>)->Name("softmax/openmp")->Arg(1024)->Arg(16384)->UseRealTime();
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Arg(1024)->Arg(16384);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/openmp")->Arg(1024)->Arg(16384)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
