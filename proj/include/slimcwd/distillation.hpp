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

#ifndef SLIMCWD_DISTILLATION_HPP
#define SLIMCWD_DISTILLATION_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slimcwd/graph.hpp"
#include "slimcwd/tensor.hpp"

namespace slimcwd::distill {

/// Double-precision NCHW activation map. Loss math runs in float64 even
/// though the network itself is float32.
struct FeatureMap {
  int batch = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int n, int c, int h, int w, double fill = 0.0)
      : batch(n), channels(c), height(h), width(w), values(static_cast<std::size_t>(n) * c * h * w, fill) {}

  static FeatureMap from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double* row(int n, int c) { return values.data() + (static_cast<std::size_t>(n) * channels + c) * plane(); }
  const double* row(int n, int c) const {
    return values.data() + (static_cast<std::size_t>(n) * channels + c) * plane();
  }
  bool same_shape(const FeatureMap& o) const {
    return batch == o.batch && channels == o.channels && height == o.height && width == o.width;
  }
};

/// Softmax over the H*W positions of every (sample, channel) row after
/// dividing activations by tau. Max-subtracted for stability.
FeatureMap channel_softmax(const FeatureMap& fm, double tau);

/// (tau^2 / C) * sum_c KL(phi(teacher_c) || phi(student_c)), averaged over
/// the batch.
double cwd_loss(const FeatureMap& teacher, const FeatureMap& student, double tau);

struct CwdValue {
  double loss = 0.0;
  FeatureMap student_grad;  // d loss / d student activations; teacher is constant
};

CwdValue cwd_loss_and_grad(const FeatureMap& teacher, const FeatureMap& student, double tau);

enum class AlphaSchedule { Constant, ExponentialDecay, TimeBasedDecay, CosineAnnealing, InverseSigmoidDecay };
enum class Alignment { IndexMap, LearnedProjection };

const char* schedule_name(AlphaSchedule s);
AlphaSchedule parse_schedule(const std::string& s);
const char* alignment_name(Alignment a);
Alignment parse_alignment(const std::string& s);

struct TapPoint {
  std::string teacher;
  std::string student;
};

struct DistillationConfig {
  std::vector<TapPoint> taps;
  double temperature = 6.0;
  double alpha0 = 0.5;
  AlphaSchedule schedule = AlphaSchedule::Constant;
  double decay_k = 5.0;
  /// Floor for cosine annealing; defaults to 0.1 * alpha0.
  std::optional<double> alpha_min;
  Alignment alignment = Alignment::IndexMap;
};

/// Tap presets over a graph's named tap groups ("neck", "backbone"):
///   C1 - neck taps, index-map alignment
///   C2 - backbone and neck taps, index-map alignment
///   C3 - neck taps, learned projection (teacher of a different width)
DistillationConfig preset(const std::string& name, const TapGroups& groups);

/// Weight of the distillation term at step t of horizon T (0 <= t <= T).
///   constant                 alpha0
///   exponential_decay        alpha0 * exp(-k t / T)
///   time_based_decay         alpha0 / (1 + k t / T)
///   cosine_annealing         amin + (alpha0 - amin) (1 + cos(pi t / T)) / 2
///   inverse_sigmoid_decay    alpha0 (1 + exp(-k/2)) / (1 + exp(k (t/T - 1/2)))
double alpha_at(int t, int horizon, const DistillationConfig& cfg);

/// task + alpha * mean(cwd_per_tap); the mean of an empty list is 0.
double total_loss(double task_loss, std::span<const double> cwd_per_tap, double alpha);

/// 1x1 channel-mixing map lifting student features to the teacher's width.
class ChannelProjection {
 public:
  ChannelProjection() = default;
  /// Starts as a (scaled) partial identity plus small noise.
  ChannelProjection(int in_channels, int out_channels, std::uint64_t seed);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }

  FeatureMap apply(const FeatureMap& student) const;
  /// Back-propagates `grad_out`; accumulates into `grad_weights` and returns
  /// the gradient w.r.t. the student map.
  FeatureMap backward(const FeatureMap& student, const FeatureMap& grad_out, std::vector<double>& grad_weights) const;

 private:
  int in_ = 0;
  int out_ = 0;
  std::vector<double> weights_;  // [out, in]
};

struct AlignedPair {
  FeatureMap teacher;
  FeatureMap student;
};

/// Keeps the teacher channels listed in `kept` (original index of each
/// surviving student channel); the student passes through unchanged.
AlignedPair align_index_map(const FeatureMap& teacher, const FeatureMap& student, std::span<const int> kept);

AlignedPair align_projection(const FeatureMap& teacher, const FeatureMap& student, const ChannelProjection& proj);

}  // namespace slimcwd::distill

#endif  // SLIMCWD_DISTILLATION_HPP
