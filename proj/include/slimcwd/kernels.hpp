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

#ifndef SLIMCWD_KERNELS_HPP
#define SLIMCWD_KERNELS_HPP

#include <span>

namespace slimcwd::kernels {

/// Geometry of a dense (ungrouped) square-kernel 2-D convolution over NCHW data.
struct ConvShape {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;

  int out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
};

// OpenMP kernels. Every output element is produced by exactly one thread with
// a fixed accumulation order, so results do not depend on the thread count.

/// y[n, oc] = bias[oc] + sum_ic w[oc, ic] * x[n, ic]. `bias` may be empty.
void conv2d_forward(const ConvShape& s, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y);

/// Overwrites dx with the gradient w.r.t. the convolution input.
void conv2d_backward_data(const ConvShape& s, std::span<const float> dy, std::span<const float> w,
                          std::span<float> dx);

/// Overwrites dw (and db when non-empty) with the filter/bias gradients.
void conv2d_backward_filter(const ConvShape& s, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db);

/// Max pooling with implicit -inf padding. `argmax` receives the flat input
/// plane offset of each selected element.
void maxpool2d_forward(int batch, int channels, int in_h, int in_w, int kernel, int stride, int padding,
                       std::span<const float> x, std::span<float> y, std::span<int> argmax);

namespace reference {

// Straightforward serial loops in textbook order. Kept as the oracle for the
// optimized kernels above and as a baseline in the benchmark target.

void conv2d_forward(const ConvShape& s, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y);
void conv2d_backward_data(const ConvShape& s, std::span<const float> dy, std::span<const float> w,
                          std::span<float> dx);
void conv2d_backward_filter(const ConvShape& s, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db);
void maxpool2d_forward(int batch, int channels, int in_h, int in_w, int kernel, int stride, int padding,
                       std::span<const float> x, std::span<float> y, std::span<int> argmax);

}  // namespace reference

}  // namespace slimcwd::kernels

#endif  // SLIMCWD_KERNELS_HPP
