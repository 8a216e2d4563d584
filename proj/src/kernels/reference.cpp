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

#include <algorithm>
#include <limits>

#include "slimcwd/kernels.hpp"

namespace slimcwd::kernels::reference {

void conv2d_forward(const ConvShape& s, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (int ic = 0; ic < s.in_channels; ++ic)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = i * s.stride + kh - s.padding;
                const int iw = j * s.stride + kw - s.padding;
                if (ih < 0 || ih >= s.in_h || iw < 0 || iw >= s.in_w) continue;
                acc += static_cast<double>(w[((oc * s.in_channels + ic) * k + kh) * k + kw]) *
                       x[((static_cast<std::size_t>(n) * s.in_channels + ic) * s.in_h + ih) * s.in_w + iw];
              }
          y[((static_cast<std::size_t>(n) * s.out_channels + oc) * oh + i) * ow + j] = static_cast<float>(acc);
        }
}

void conv2d_backward_data(const ConvShape& s, std::span<const float> dy, std::span<const float> w,
                          std::span<float> dx) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  for (int n = 0; n < s.batch; ++n)
    for (int ic = 0; ic < s.in_channels; ++ic)
      for (int ih = 0; ih < s.in_h; ++ih)
        for (int iw = 0; iw < s.in_w; ++iw) {
          double acc = 0.0;
          for (int oc = 0; oc < s.out_channels; ++oc)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ti = ih + s.padding - kh;
                const int tj = iw + s.padding - kw;
                if (ti < 0 || tj < 0 || ti % s.stride != 0 || tj % s.stride != 0) continue;
                const int i = ti / s.stride, j = tj / s.stride;
                if (i >= oh || j >= ow) continue;
                acc += static_cast<double>(w[((oc * s.in_channels + ic) * k + kh) * k + kw]) *
                       dy[((static_cast<std::size_t>(n) * s.out_channels + oc) * oh + i) * ow + j];
              }
          dx[((static_cast<std::size_t>(n) * s.in_channels + ic) * s.in_h + ih) * s.in_w + iw] =
              static_cast<float>(acc);
        }
}

void conv2d_backward_filter(const ConvShape& s, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  for (int oc = 0; oc < s.out_channels; ++oc) {
    for (int ic = 0; ic < s.in_channels; ++ic)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < s.batch; ++n)
            for (int i = 0; i < oh; ++i)
              for (int j = 0; j < ow; ++j) {
                const int ih = i * s.stride + kh - s.padding;
                const int iw = j * s.stride + kw - s.padding;
                if (ih < 0 || ih >= s.in_h || iw < 0 || iw >= s.in_w) continue;
                acc += static_cast<double>(
                           dy[((static_cast<std::size_t>(n) * s.out_channels + oc) * oh + i) * ow + j]) *
                       x[((static_cast<std::size_t>(n) * s.in_channels + ic) * s.in_h + ih) * s.in_w + iw];
              }
          dw[((oc * s.in_channels + ic) * k + kh) * k + kw] = static_cast<float>(acc);
        }
    if (!db.empty()) {
      double acc = 0.0;
      for (int n = 0; n < s.batch; ++n)
        for (int i = 0; i < oh * ow; ++i)
          acc += dy[(static_cast<std::size_t>(n) * s.out_channels + oc) * oh * ow + i];
      db[oc] = static_cast<float>(acc);
    }
  }
}

void maxpool2d_forward(int batch, int channels, int in_h, int in_w, int kernel, int stride, int padding,
                       std::span<const float> x, std::span<float> y, std::span<int> argmax) {
  const int oh = (in_h + 2 * padding - kernel) / stride + 1;
  const int ow = (in_w + 2 * padding - kernel) / stride + 1;
  for (int p = 0; p < batch * channels; ++p)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        float best = -std::numeric_limits<float>::infinity();
        int best_at = -1;
        for (int kh = 0; kh < kernel; ++kh)
          for (int kw = 0; kw < kernel; ++kw) {
            const int ih = i * stride + kh - padding;
            const int iw = j * stride + kw - padding;
            if (ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) continue;
            const float v = x[static_cast<std::size_t>(p) * in_h * in_w + ih * in_w + iw];
            if (v > best) {
              best = v;
              best_at = ih * in_w + iw;
            }
          }
        y[static_cast<std::size_t>(p) * oh * ow + i * ow + j] = best;
        argmax[static_cast<std::size_t>(p) * oh * ow + i * ow + j] = best_at;
      }
}

}  // namespace slimcwd::kernels::reference
