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

#include <omp.h>

#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "slimcwd/kernels.hpp"

using namespace slimcwd;
using slimcwd::kernels::ConvShape;

namespace {

ConvShape random_shape(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ConvShape s;
  s.batch = pick(1, 3);
  s.in_channels = pick(1, 6);
  s.out_channels = pick(1, 7);
  s.kernel = std::vector<int>{1, 3, 5}[pick(0, 2)];
  s.stride = pick(1, 2);
  s.padding = pick(0, s.kernel / 2);
  s.in_h = pick(s.kernel, 11);
  s.in_w = pick(s.kernel, 11);
  return s;
}

void check_close(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == doctest::Approx(b[i]).epsilon(1e-4).scale(1.0));
}

}  // namespace

TEST_CASE("optimized conv kernels agree with reference loops on random geometries") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const ConvShape s = random_shape(rng);
    CAPTURE(trial);
    const std::size_t xs = static_cast<std::size_t>(s.batch) * s.in_channels * s.in_h * s.in_w;
    const std::size_t ys = static_cast<std::size_t>(s.batch) * s.out_channels * s.out_h() * s.out_w();
    const std::size_t ws = static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel;
    const auto x = testing::random_vector(xs, trial * 3 + 1);
    const auto w = testing::random_vector(ws, trial * 3 + 2);
    const auto dy = testing::random_vector(ys, trial * 3 + 3);
    const auto bias = trial % 2 ? testing::random_vector(s.out_channels, trial) : std::vector<float>{};

    std::vector<float> y1(ys), y2(ys);
    kernels::conv2d_forward(s, x, w, bias, y1);
    kernels::reference::conv2d_forward(s, x, w, bias, y2);
    check_close(y1, y2);

    std::vector<float> dx1(xs), dx2(xs);
    kernels::conv2d_backward_data(s, dy, w, dx1);
    kernels::reference::conv2d_backward_data(s, dy, w, dx2);
    check_close(dx1, dx2);

    std::vector<float> dw1(ws), dw2(ws), db1(s.out_channels), db2(s.out_channels);
    kernels::conv2d_backward_filter(s, x, dy, dw1, db1);
    kernels::reference::conv2d_backward_filter(s, x, dy, dw2, db2);
    check_close(dw1, dw2);
    check_close(db1, db2);
  }
}

TEST_CASE("maxpool kernel matches reference including argmax") {
  const auto x = testing::random_vector(2 * 3 * 7 * 6, 11);
  for (int k : {1, 3, 5}) {
    const int oh = (7 + 2 * (k / 2) - k) + 1, ow = (6 + 2 * (k / 2) - k) + 1;
    std::vector<float> y1(2 * 3 * oh * ow), y2(y1.size());
    std::vector<int> a1(y1.size()), a2(y1.size());
    kernels::maxpool2d_forward(2, 3, 7, 6, k, 1, k / 2, x, y1, a1);
    kernels::reference::maxpool2d_forward(2, 3, 7, 6, k, 1, k / 2, x, y2, a2);
    CHECK(y1 == y2);
    CHECK(a1 == a2);
  }
}

TEST_CASE("kernel results are bitwise independent of the OpenMP thread count") {
  ConvShape s{4, 8, 9, 9, 12, 3, 1, 1};
  const std::size_t xs = 4 * 8 * 81, ys = 4 * 12 * 81, ws = 12 * 8 * 9;
  const auto x = testing::random_vector(xs, 1), w = testing::random_vector(ws, 2), dy = testing::random_vector(ys, 3);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<float> y(ys), dx(xs), dw(ws), db(12);
    kernels::conv2d_forward(s, x, w, {}, y);
    kernels::conv2d_backward_data(s, dy, w, dx);
    kernels::conv2d_backward_filter(s, x, dy, dw, db);
    y.insert(y.end(), dx.begin(), dx.end());
    y.insert(y.end(), dw.begin(), dw.end());
    y.insert(y.end(), db.begin(), db.end());
    return y;
  };
  const auto one = run(1);
  const auto four = run(4);
  const auto three = run(3);
  omp_set_num_threads(1);
  CHECK(one == four);
  CHECK(one == three);
}
