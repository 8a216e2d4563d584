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
#include <cstddef>
#include <limits>
#include <vector>

#include "slimcwd/kernels.hpp"

namespace slimcwd::kernels {
namespace {

// Convolutions are lowered to a patch matrix of shape
// [in_channels * k * k, out_h * out_w] per sample; row r = (ic, kh, kw).

bool is_pointwise(const ConvShape& s) { return s.kernel == 1 && s.stride == 1 && s.padding == 0; }

// Fixed 8-lane dot product. Lane assignment depends only on the index, never
// on pointer alignment, so the rounding pattern is reproducible run to run.
float dot(const float* a, const float* b, int n) {
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int p = 0;
  for (; p + 8 <= n; p += 8)
    for (int l = 0; l < 8; ++l) lanes[l] += a[p + l] * b[p + l];
  for (; p < n; ++p) lanes[p % 8] += a[p] * b[p];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

float sum(const float* a, int n) {
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int p = 0;
  for (; p + 8 <= n; p += 8)
    for (int l = 0; l < 8; ++l) lanes[l] += a[p + l];
  for (; p < n; ++p) lanes[p % 8] += a[p];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

void im2col(const ConvShape& s, const float* x, float* cols) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  const int rows = s.in_channels * k * k;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int ic = r / (k * k), kh = (r / k) % k, kw = r % k;
    const float* plane = x + static_cast<std::size_t>(ic) * s.in_h * s.in_w;
    float* dst = cols + static_cast<std::size_t>(r) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const int ih = i * s.stride + kh - s.padding;
      float* row = dst + i * ow;
      if (ih < 0 || ih >= s.in_h) {
        std::fill(row, row + ow, 0.0f);
        continue;
      }
      const float* src = plane + ih * s.in_w;
      for (int j = 0; j < ow; ++j) {
        const int iw = j * s.stride + kw - s.padding;
        row[j] = (iw >= 0 && iw < s.in_w) ? src[iw] : 0.0f;
      }
    }
  }
}

// Scatter-add of a patch-matrix gradient back to the input plane layout.
void col2im(const ConvShape& s, const float* cols, float* dx) {
  const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < s.in_channels; ++ic) {
    float* plane = dx + static_cast<std::size_t>(ic) * s.in_h * s.in_w;
    std::fill(plane, plane + static_cast<std::size_t>(s.in_h) * s.in_w, 0.0f);
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        const float* src = cols + static_cast<std::size_t>((ic * k + kh) * k + kw) * oh * ow;
        for (int i = 0; i < oh; ++i) {
          const int ih = i * s.stride + kh - s.padding;
          if (ih < 0 || ih >= s.in_h) continue;
          float* dst = plane + ih * s.in_w;
          for (int j = 0; j < ow; ++j) {
            const int iw = j * s.stride + kw - s.padding;
            if (iw >= 0 && iw < s.in_w) dst[iw] += src[i * ow + j];
          }
        }
      }
  }
}

}  // namespace

void conv2d_forward(const ConvShape& s, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y) {
  const int pixels = s.out_h() * s.out_w();
  const int rows = s.in_channels * s.kernel * s.kernel;
  const bool pointwise = is_pointwise(s);
  std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(rows) * pixels);
  for (int n = 0; n < s.batch; ++n) {
    const float* xn = x.data() + static_cast<std::size_t>(n) * s.in_channels * s.in_h * s.in_w;
    if (!pointwise) im2col(s, xn, cols.data());
    const float* patches = pointwise ? xn : cols.data();
    float* yn = y.data() + static_cast<std::size_t>(n) * s.out_channels * pixels;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < s.out_channels; ++oc) {
      float* out = yn + static_cast<std::size_t>(oc) * pixels;
      const float b = bias.empty() ? 0.0f : bias[oc];
      std::fill(out, out + pixels, b);
      const float* wrow = w.data() + static_cast<std::size_t>(oc) * rows;
      for (int r = 0; r < rows; ++r) {
        const float wv = wrow[r];
        const float* src = patches + static_cast<std::size_t>(r) * pixels;
#pragma omp simd
        for (int p = 0; p < pixels; ++p) out[p] += wv * src[p];
      }
    }
  }
}

void conv2d_backward_data(const ConvShape& s, std::span<const float> dy, std::span<const float> w,
                          std::span<float> dx) {
  const int pixels = s.out_h() * s.out_w();
  const int rows = s.in_channels * s.kernel * s.kernel;
  const bool pointwise = is_pointwise(s);
  std::vector<float> dcols(static_cast<std::size_t>(rows) * pixels);
  for (int n = 0; n < s.batch; ++n) {
    const float* dyn = dy.data() + static_cast<std::size_t>(n) * s.out_channels * pixels;
    float* dxn = dx.data() + static_cast<std::size_t>(n) * s.in_channels * s.in_h * s.in_w;
    float* target = pointwise ? dxn : dcols.data();
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
      float* dst = target + static_cast<std::size_t>(r) * pixels;
      std::fill(dst, dst + pixels, 0.0f);
      for (int oc = 0; oc < s.out_channels; ++oc) {
        const float wv = w[static_cast<std::size_t>(oc) * rows + r];
        const float* src = dyn + static_cast<std::size_t>(oc) * pixels;
#pragma omp simd
        for (int p = 0; p < pixels; ++p) dst[p] += wv * src[p];
      }
    }
    if (!pointwise) col2im(s, dcols.data(), dxn);
  }
}

void conv2d_backward_filter(const ConvShape& s, std::span<const float> x, std::span<const float> dy,
                            std::span<float> dw, std::span<float> db) {
  const int pixels = s.out_h() * s.out_w();
  const int rows = s.in_channels * s.kernel * s.kernel;
  const bool pointwise = is_pointwise(s);
  std::fill(dw.begin(), dw.end(), 0.0f);
  if (!db.empty()) std::fill(db.begin(), db.end(), 0.0f);
  std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(rows) * pixels);
  for (int n = 0; n < s.batch; ++n) {
    const float* xn = x.data() + static_cast<std::size_t>(n) * s.in_channels * s.in_h * s.in_w;
    if (!pointwise) im2col(s, xn, cols.data());
    const float* patches = pointwise ? xn : cols.data();
    const float* dyn = dy.data() + static_cast<std::size_t>(n) * s.out_channels * pixels;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const float* g = dyn + static_cast<std::size_t>(oc) * pixels;
      float* wrow = dw.data() + static_cast<std::size_t>(oc) * rows;
      for (int r = 0; r < rows; ++r) {
        const float* src = patches + static_cast<std::size_t>(r) * pixels;
        wrow[r] += dot(g, src, pixels);
      }
      if (!db.empty()) db[oc] += sum(g, pixels);
    }
  }
}

void maxpool2d_forward(int batch, int channels, int in_h, int in_w, int kernel, int stride, int padding,
                       std::span<const float> x, std::span<float> y, std::span<int> argmax) {
  const int oh = (in_h + 2 * padding - kernel) / stride + 1;
  const int ow = (in_w + 2 * padding - kernel) / stride + 1;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < batch * channels; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * in_h * in_w;
    float* dst = y.data() + static_cast<std::size_t>(p) * oh * ow;
    int* arg = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const int h0 = std::max(i * stride - padding, 0);
      const int h1 = std::min(i * stride - padding + kernel, in_h);
      for (int j = 0; j < ow; ++j) {
        const int w0 = std::max(j * stride - padding, 0);
        const int w1 = std::min(j * stride - padding + kernel, in_w);
        float best = -std::numeric_limits<float>::infinity();
        int best_at = -1;
        for (int ih = h0; ih < h1; ++ih)
          for (int iw = w0; iw < w1; ++iw)
            if (src[ih * in_w + iw] > best) {
              best = src[ih * in_w + iw];
              best_at = ih * in_w + iw;
            }
        dst[i * ow + j] = best;
        arg[i * ow + j] = best_at;
      }
    }
  }
}

}  // namespace slimcwd::kernels
