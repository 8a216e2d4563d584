// Copyright 2026 The slimcwd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reference vs OpenMP conv kernels on the toy detector's layer shapes.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "slimcwd/kernels.hpp"

namespace k = slimcwd::kernels;

namespace {

struct Buffers {
  k::ConvShape s;
  std::vector<float> x, w, b, y;

  explicit Buffers(const k::ConvShape& shape) : s(shape) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    x.resize(static_cast<std::size_t>(s.batch) * s.in_channels * s.in_h * s.in_w);
    w.resize(static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel);
    b.resize(s.out_channels);
    y.resize(static_cast<std::size_t>(s.batch) * s.out_channels * s.out_h() * s.out_w());
    for (auto* v : {&x, &w, &b})
      for (auto& e : *v) e = d(rng);
  }
};

// batch, in, size, out, kernel, stride
k::ConvShape shape_of(const benchmark::State& st) {
  k::ConvShape s;
  s.batch = static_cast<int>(st.range(0));
  s.in_channels = static_cast<int>(st.range(1));
  s.in_h = s.in_w = static_cast<int>(st.range(2));
  s.out_channels = static_cast<int>(st.range(3));
  s.kernel = static_cast<int>(st.range(4));
  s.stride = static_cast<int>(st.range(5));
  s.padding = s.kernel / 2;
  return s;
}

void set_counters(benchmark::State& st, const k::ConvShape& s) {
  const double macs = static_cast<double>(s.batch) * s.out_channels * s.out_h() * s.out_w() * s.in_channels *
                      s.kernel * s.kernel;
  st.counters["GFLOP/s"] = benchmark::Counter(2.0 * macs * st.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <bool Reference>
void BM_Forward(benchmark::State& st) {
  Buffers buf(shape_of(st));
  for (auto _ : st) {
    if constexpr (Reference)
      k::reference::conv2d_forward(buf.s, buf.x, buf.w, buf.b, buf.y);
    else
      k::conv2d_forward(buf.s, buf.x, buf.w, buf.b, buf.y);
    benchmark::DoNotOptimize(buf.y.data());
  }
  set_counters(st, buf.s);
}

template <bool Reference>
void BM_BackwardData(benchmark::State& st) {
  Buffers buf(shape_of(st));
  std::vector<float> dx(buf.x.size());
  for (auto _ : st) {
    if constexpr (Reference)
      k::reference::conv2d_backward_data(buf.s, buf.y, buf.w, dx);
    else
      k::conv2d_backward_data(buf.s, buf.y, buf.w, dx);
    benchmark::DoNotOptimize(dx.data());
  }
  set_counters(st, buf.s);
}

template <bool Reference>
void BM_BackwardFilter(benchmark::State& st) {
  Buffers buf(shape_of(st));
  std::vector<float> dw(buf.w.size()), db(buf.b.size());
  for (auto _ : st) {
    if constexpr (Reference)
      k::reference::conv2d_backward_filter(buf.s, buf.x, buf.y, dw, db);
    else
      k::conv2d_backward_filter(buf.s, buf.x, buf.y, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
  set_counters(st, buf.s);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"n", "cin", "hw", "cout", "k", "s"});
  b->Args({8, 3, 32, 16, 3, 2});   // stem
  b->Args({8, 16, 16, 32, 3, 2});  // down1
  b->Args({8, 32, 8, 32, 3, 1});   // residual
  b->Args({8, 64, 8, 32, 3, 1});   // neck
  b->Args({8, 128, 4, 32, 1, 1});  // spp squeeze
  b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_Forward<true>)->Name("conv_forward/reference")->Apply(shapes);
BENCHMARK(BM_Forward<false>)->Name("conv_forward/omp")->Apply(shapes);
BENCHMARK(BM_BackwardData<true>)->Name("conv_backward_data/reference")->Apply(shapes);
BENCHMARK(BM_BackwardData<false>)->Name("conv_backward_data/omp")->Apply(shapes);
BENCHMARK(BM_BackwardFilter<true>)->Name("conv_backward_filter/reference")->Apply(shapes);
BENCHMARK(BM_BackwardFilter<false>)->Name("conv_backward_filter/omp")->Apply(shapes);

BENCHMARK_MAIN();
