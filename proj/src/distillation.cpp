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

#include "slimcwd/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "slimcwd/error.hpp"

namespace slimcwd::distill {

FeatureMap FeatureMap::from_tensor(const Tensor& t) {
  FeatureMap fm(t.batch(), t.channels(), t.height(), t.width());
  std::copy(t.values().begin(), t.values().end(), fm.values.begin());
  return fm;
}

Tensor FeatureMap::to_tensor() const {
  Tensor t(batch, channels, height, width);
  std::transform(values.begin(), values.end(), t.values().begin(), [](double v) { return static_cast<float>(v); });
  return t;
}

namespace {

// log phi for one spatial row.
void log_softmax_row(const double* y, std::size_t n, double tau, double* out) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[i])) throw NumericError("non-finite activation in channel softmax input");
    peak = std::max(peak, y[i] / tau);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(y[i] / tau - peak);
  const double log_z = peak + std::log(sum);
  for (std::size_t i = 0; i < n; ++i) out[i] = y[i] / tau - log_z;
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be positive");
}

void check_pair(const FeatureMap& t, const FeatureMap& s) {
  if (!t.same_shape(s))
    throw ShapeError("teacher [" + std::to_string(t.channels) + "ch " + std::to_string(t.height) + "x" +
                     std::to_string(t.width) + "] and student [" + std::to_string(s.channels) + "ch " +
                     std::to_string(s.height) + "x" + std::to_string(s.width) + "] features are not aligned");
  if (t.batch < 1 || t.channels < 1 || t.height < 1 || t.width < 1) throw ShapeError("empty feature map");
}

}  // namespace

FeatureMap channel_softmax(const FeatureMap& fm, double tau) {
  check_tau(tau);
  FeatureMap out(fm.batch, fm.channels, fm.height, fm.width);
  const std::size_t n = fm.plane();
  for (int b = 0; b < fm.batch; ++b)
    for (int c = 0; c < fm.channels; ++c) {
      double* dst = out.row(b, c);
      log_softmax_row(fm.row(b, c), n, tau, dst);
      for (std::size_t i = 0; i < n; ++i) dst[i] = std::exp(dst[i]);
    }
  return out;
}

CwdValue cwd_loss_and_grad(const FeatureMap& teacher, const FeatureMap& student, double tau) {
  check_tau(tau);
  check_pair(teacher, student);
  const std::size_t n = teacher.plane();
  const double scale = tau * tau / teacher.channels / teacher.batch;
  CwdValue out;
  out.student_grad = FeatureMap(student.batch, student.channels, student.height, student.width);
  std::vector<double> log_t(n), log_s(n);
  double total = 0.0;
  for (int b = 0; b < teacher.batch; ++b)
    for (int c = 0; c < teacher.channels; ++c) {
      log_softmax_row(teacher.row(b, c), n, tau, log_t.data());
      log_softmax_row(student.row(b, c), n, tau, log_s.data());
      double kl = 0.0;
      double* g = out.student_grad.row(b, c);
      for (std::size_t i = 0; i < n; ++i) {
        const double pt = std::exp(log_t[i]);
        if (pt > 0.0) kl += pt * (log_t[i] - log_s[i]);
        // d/dy_s of tau^2 KL = tau * (p_s - p_t)
        g[i] = scale / tau * (std::exp(log_s[i]) - pt);
      }
      total += std::max(kl, 0.0);
    }
  out.loss = scale * total;
  return out;
}

double cwd_loss(const FeatureMap& teacher, const FeatureMap& student, double tau) {
  return cwd_loss_and_grad(teacher, student, tau).loss;
}

const char* schedule_name(AlphaSchedule s) {
  switch (s) {
    case AlphaSchedule::Constant: return "constant";
    case AlphaSchedule::ExponentialDecay: return "exponential_decay";
    case AlphaSchedule::TimeBasedDecay: return "time_based_decay";
    case AlphaSchedule::CosineAnnealing: return "cosine_annealing";
    case AlphaSchedule::InverseSigmoidDecay: return "inverse_sigmoid_decay";
  }
  return "constant";
}

AlphaSchedule parse_schedule(const std::string& s) {
  for (auto v : {AlphaSchedule::Constant, AlphaSchedule::ExponentialDecay, AlphaSchedule::TimeBasedDecay,
                 AlphaSchedule::CosineAnnealing, AlphaSchedule::InverseSigmoidDecay})
    if (s == schedule_name(v)) return v;
  throw ConfigError("distill.alpha_schedule", "unknown schedule '" + s + "'");
}

const char* alignment_name(Alignment a) {
  return a == Alignment::LearnedProjection ? "learned_projection" : "index_map";
}

Alignment parse_alignment(const std::string& s) {
  if (s == "index_map") return Alignment::IndexMap;
  if (s == "learned_projection") return Alignment::LearnedProjection;
  throw ConfigError("distill.alignment", "expected 'index_map' or 'learned_projection', got '" + s + "'");
}

DistillationConfig preset(const std::string& name, const TapGroups& groups) {
  auto group = [&](const char* key) {
    auto it = groups.find(key);
    if (it == groups.end()) throw ConfigError("distill.preset", std::string("graph defines no '") + key + "' taps");
    return it->second;
  };
  std::vector<std::string> ids;
  DistillationConfig cfg;
  if (name == "C1" || name == "C3") {
    ids = group("neck");
  } else if (name == "C2") {
    ids = group("backbone");
    for (auto& id : group("neck")) ids.push_back(id);
  } else {
    throw ConfigError("distill.preset", "unknown preset '" + name + "' (expected C1, C2 or C3)");
  }
  if (name == "C3") cfg.alignment = Alignment::LearnedProjection;
  for (auto& id : ids) cfg.taps.push_back({id, id});
  return cfg;
}

double alpha_at(int t, int horizon, const DistillationConfig& cfg) {
  if (horizon < 1) throw DomainError("schedule horizon must be >= 1");
  if (t < 0 || t > horizon)
    throw DomainError("step " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + "]");
  if (cfg.alpha0 < 0.0) throw DomainError("alpha must be non-negative");
  const double a0 = cfg.alpha0, k = cfg.decay_k;
  const double x = static_cast<double>(t) / horizon;
  switch (cfg.schedule) {
    case AlphaSchedule::Constant: return a0;
    case AlphaSchedule::ExponentialDecay: return a0 * std::exp(-k * x);
    case AlphaSchedule::TimeBasedDecay: return a0 / (1.0 + k * x);
    case AlphaSchedule::CosineAnnealing: {
      const double amin = cfg.alpha_min.value_or(0.1 * a0);
      return amin + (a0 - amin) * (1.0 + std::cos(std::numbers::pi * x)) / 2.0;
    }
    case AlphaSchedule::InverseSigmoidDecay:
      // The ratio is exactly 1 at t = 0.
      return a0 * ((1.0 + std::exp(-k / 2.0)) / (1.0 + std::exp(k * (x - 0.5))));
  }
  return a0;
}

double total_loss(double task_loss, std::span<const double> cwd_per_tap, double alpha) {
  if (alpha < 0.0) throw DomainError("alpha must be non-negative");
  if (cwd_per_tap.empty()) return task_loss;
  double sum = 0.0;
  for (double v : cwd_per_tap) sum += v;
  return task_loss + alpha * (sum / static_cast<double>(cwd_per_tap.size()));
}

ChannelProjection::ChannelProjection(int in_channels, int out_channels, std::uint64_t seed)
    : in_(in_channels), out_(out_channels), weights_(static_cast<std::size_t>(in_channels) * out_channels, 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (int o = 0; o < out_; ++o)
    for (int i = 0; i < in_; ++i) weights_[static_cast<std::size_t>(o) * in_ + i] = (i == o % in_ ? 1.0 : 0.0) + noise(rng);
}

FeatureMap ChannelProjection::apply(const FeatureMap& s) const {
  if (s.channels != in_) throw ShapeError("projection expects " + std::to_string(in_) + " channels");
  FeatureMap out(s.batch, out_, s.height, s.width);
  const std::size_t n = s.plane();
  for (int b = 0; b < s.batch; ++b)
    for (int o = 0; o < out_; ++o) {
      double* dst = out.row(b, o);
      for (int i = 0; i < in_; ++i) {
        const double w = weights_[static_cast<std::size_t>(o) * in_ + i];
        const double* src = s.row(b, i);
        for (std::size_t p = 0; p < n; ++p) dst[p] += w * src[p];
      }
    }
  return out;
}

FeatureMap ChannelProjection::backward(const FeatureMap& s, const FeatureMap& g, std::vector<double>& gw) const {
  gw.resize(weights_.size(), 0.0);
  FeatureMap gs(s.batch, in_, s.height, s.width);
  const std::size_t n = s.plane();
  for (int b = 0; b < s.batch; ++b)
    for (int o = 0; o < out_; ++o) {
      const double* go = g.row(b, o);
      for (int i = 0; i < in_; ++i) {
        const double* src = s.row(b, i);
        double* dst = gs.row(b, i);
        const double w = weights_[static_cast<std::size_t>(o) * in_ + i];
        double acc = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          acc += go[p] * src[p];
          dst[p] += w * go[p];
        }
        gw[static_cast<std::size_t>(o) * in_ + i] += acc;
      }
    }
  return gs;
}

AlignedPair align_index_map(const FeatureMap& teacher, const FeatureMap& student, std::span<const int> kept) {
  if (static_cast<int>(kept.size()) != student.channels)
    throw ShapeError("index map lists " + std::to_string(kept.size()) + " channels but student has " +
                     std::to_string(student.channels));
  AlignedPair out;
  out.teacher = FeatureMap(teacher.batch, student.channels, teacher.height, teacher.width);
  for (int c = 0; c < student.channels; ++c)
    if (kept[c] < 0 || kept[c] >= teacher.channels)
      throw StructuralError("index map references teacher channel " + std::to_string(kept[c]) + " of " +
                            std::to_string(teacher.channels));
  for (int b = 0; b < teacher.batch; ++b)
    for (int c = 0; c < student.channels; ++c)
      std::copy(teacher.row(b, kept[c]), teacher.row(b, kept[c]) + teacher.plane(), out.teacher.row(b, c));
  out.student = student;
  return out;
}

AlignedPair align_projection(const FeatureMap& teacher, const FeatureMap& student, const ChannelProjection& proj) {
  if (proj.out_channels() != teacher.channels) throw ShapeError("projection output width differs from teacher");
  return {teacher, proj.apply(student)};
}

}  // namespace slimcwd::distill
