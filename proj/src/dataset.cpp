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

#include "slimcwd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "slimcwd/error.hpp"

namespace slimcwd::train {

const char* task_name(TaskKind k) {
  return k == TaskKind::MulticlassClassification ? "multiclass_classification" : "dense_heatmap_detection";
}

TaskKind parse_task(const std::string& s) {
  if (s == "multiclass_classification") return TaskKind::MulticlassClassification;
  if (s == "dense_heatmap_detection") return TaskKind::DenseHeatmapDetection;
  throw ConfigError("task.kind", "unknown task '" + s + "'");
}

namespace {

constexpr int kMaxClasses = 5;
constexpr double kSigma = 0.6;  // heatmap spread in cells

// Whether pixel (x, y) lies inside shape `cls` of radius r centred at (cx, cy).
bool inside(int cls, double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  switch (cls) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::abs(dx) <= r * 0.85 && std::abs(dy) <= r * 0.85;
    case 2: return dy <= r * 0.8 && dy >= -r && std::abs(dx) <= (dy + r) * 0.6;
    case 3: return (std::abs(dx) <= r * 0.3 && std::abs(dy) <= r) || (std::abs(dy) <= r * 0.3 && std::abs(dx) <= r);
    default: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
  }
}

void render_sample(const ToyTaskSpec& spec, std::mt19937_64& rng, float* image, float* heatmap, int* label) {
  const int S = spec.image_size;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.08);
  std::uniform_int_distribution<int> cls_dist(0, spec.num_classes - 1);

  double bg[3];
  for (auto& b : bg) b = 0.2 + 0.3 * unit(rng);
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < S * S; ++p) image[c * S * S + p] = static_cast<float>(bg[c] + noise(rng));

  const bool detection = spec.kind == TaskKind::DenseHeatmapDetection;
  const int objects = detection ? std::uniform_int_distribution<int>(1, spec.max_objects)(rng) : 1;
  const int H = S / spec.heatmap_stride;
  for (int o = 0; o < objects; ++o) {
    const int cls = cls_dist(rng);
    const double r = S * (0.09 + 0.07 * unit(rng));
    const double cx = r + (S - 2 * r) * unit(rng);
    const double cy = r + (S - 2 * r) * unit(rng);
    double color[3];
    for (auto& c : color) c = 0.55 + 0.45 * unit(rng);
    color[static_cast<int>(unit(rng) * 3) % 3] *= 0.3;  // tint so shapes differ from gray
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        if (inside(cls, x + 0.5, y + 0.5, cx, cy, r))
          for (int c = 0; c < 3; ++c) image[c * S * S + y * S + x] = static_cast<float>(color[c] + noise(rng) * 0.5);
    if (detection) {
      const int gx = std::clamp(static_cast<int>(cx / spec.heatmap_stride), 0, H - 1);
      const int gy = std::clamp(static_cast<int>(cy / spec.heatmap_stride), 0, H - 1);
      float* plane = heatmap + static_cast<std::size_t>(cls) * H * H;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < H; ++x) {
          const double d2 = (x - gx) * (x - gx) + (y - gy) * (y - gy);
          const float v = (x == gx && y == gy) ? 1.0f : static_cast<float>(std::exp(-d2 / (2.0 * kSigma * kSigma)) * 0.99);
          plane[y * H + x] = std::max(plane[y * H + x], v);
        }
    } else {
      *label = cls;
    }
  }
}

Split make_split(const ToyTaskSpec& spec, int count, std::uint64_t stream) {
  Split s;
  s.count = count;
  const int S = spec.image_size;
  const int H = S / spec.heatmap_stride;
  s.images.assign(static_cast<std::size_t>(count) * 3 * S * S, 0.0f);
  if (spec.kind == TaskKind::DenseHeatmapDetection)
    s.heatmaps.assign(static_cast<std::size_t>(count) * spec.num_classes * H * H, 0.0f);
  else
    s.labels.assign(count, 0);
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + stream);
  for (int i = 0; i < count; ++i) {
    render_sample(spec, rng, s.images.data() + static_cast<std::size_t>(i) * 3 * S * S,
                  s.heatmaps.empty() ? nullptr : s.heatmaps.data() + static_cast<std::size_t>(i) * spec.num_classes * H * H,
                  s.labels.empty() ? nullptr : &s.labels[i]);
  }
  return s;
}

}  // namespace

Dataset make_toy_dataset(const ToyTaskSpec& spec) {
  if (spec.num_classes < 2 || spec.num_classes > kMaxClasses)
    throw ConfigError("task.num_classes", "must lie in [2, " + std::to_string(kMaxClasses) + "]");
  if (spec.image_size < 8) throw ConfigError("task.image_size", "must be >= 8");
  if (spec.heatmap_stride < 1 || spec.image_size % spec.heatmap_stride != 0)
    throw ConfigError("task.heatmap_stride", "must divide image_size");
  if (spec.train_samples < 1 || spec.val_samples < 1) throw ConfigError("task.samples", "splits must be non-empty");
  if (spec.max_objects < 1) throw ConfigError("task.max_objects", "must be >= 1");
  Dataset d;
  d.spec = spec;
  d.train = make_split(spec, spec.train_samples, 1);
  d.val = make_split(spec, spec.val_samples, 2);
  return d;
}

Tensor Dataset::images(const Split& split, const std::vector<int>& indices) const {
  const int S = spec.image_size;
  Tensor t(static_cast<int>(indices.size()), 3, S, S);
  const std::size_t per = static_cast<std::size_t>(3) * S * S;
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::copy_n(split.images.data() + indices[k] * per, per, t.data() + k * per);
  return t;
}

Tensor Dataset::heatmaps(const Split& split, const std::vector<int>& indices) const {
  const int H = heatmap_size();
  Tensor t(static_cast<int>(indices.size()), spec.num_classes, H, H);
  const std::size_t per = static_cast<std::size_t>(spec.num_classes) * H * H;
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::copy_n(split.heatmaps.data() + indices[k] * per, per, t.data() + k * per);
  return t;
}

}  // namespace slimcwd::train
