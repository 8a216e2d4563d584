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

#ifndef SLIMCWD_DATASET_HPP
#define SLIMCWD_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "slimcwd/tensor.hpp"

namespace slimcwd::train {

enum class TaskKind { MulticlassClassification, DenseHeatmapDetection };

const char* task_name(TaskKind k);
TaskKind parse_task(const std::string& s);

struct ToyTaskSpec {
  TaskKind kind = TaskKind::DenseHeatmapDetection;
  int image_size = 32;
  int num_classes = 3;  // 2..5 shape classes: circle, square, triangle, cross, ring
  int train_samples = 2000;
  int val_samples = 500;
  /// Heatmap cell size in pixels; must match the network's output stride.
  int heatmap_stride = 4;
  int max_objects = 3;
  std::uint64_t seed = 0;
};

/// One split stored as contiguous arrays.
struct Split {
  int count = 0;
  std::vector<float> images;    // [count, 3, S, S]
  std::vector<int> labels;      // classification only
  std::vector<float> heatmaps;  // [count, K, S/stride, S/stride], detection only
};

struct Dataset {
  ToyTaskSpec spec;
  Split train;
  Split val;

  int heatmap_size() const { return spec.image_size / spec.heatmap_stride; }
  /// Copies samples `indices` of `split` into an NCHW batch.
  Tensor images(const Split& split, const std::vector<int>& indices) const;
  Tensor heatmaps(const Split& split, const std::vector<int>& indices) const;
};

/// Colored shapes on noisy backgrounds. Detection targets are per-class
/// Gaussian heatmaps peaking at 1 on the cell holding each object's centre.
/// Byte-identical for equal specs.
Dataset make_toy_dataset(const ToyTaskSpec& spec);

}  // namespace slimcwd::train

#endif  // SLIMCWD_DATASET_HPP
