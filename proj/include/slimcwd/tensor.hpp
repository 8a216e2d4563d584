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

#ifndef SLIMCWD_TENSOR_HPP
#define SLIMCWD_TENSOR_HPP

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace slimcwd {

/// Dense NCHW float tensor.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : shape_{n, c, h, w},
        data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int batch() const { return shape_[0]; }
  int channels() const { return shape_[1]; }
  int height() const { return shape_[2]; }
  int width() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape_[2]) * shape_[3]; }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  /// Pointer to the (n, c) spatial plane.
  float* plane_ptr(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * shape_[1] + c) * plane(); }
  const float* plane_ptr(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_[1] + c) * plane();
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  std::vector<float> data_;
};

}  // namespace slimcwd

#endif  // SLIMCWD_TENSOR_HPP
