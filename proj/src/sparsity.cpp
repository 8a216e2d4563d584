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

#include "slimcwd/sparsity.hpp"

#include <cmath>

#include "slimcwd/error.hpp"

namespace slimcwd::sparsity {

double sparsity_rate(int epoch, const ScheduleConfig& cfg) {
  if (!(cfg.initial_rate > 0.0)) throw DomainError("initial sparsity rate must be positive");
  if (cfg.total_epochs < 1) throw DomainError("total_epochs must be >= 1");
  if (epoch < 0 || epoch > cfg.total_epochs)
    throw DomainError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.total_epochs) + "]");
  // Factors are formed as exact integer ratios, (10E - 9e) / 10E and
  // (E + 9e) / 10E, so round values like e = E/2 come out correctly rounded.
  const double ten_e = 10.0 * cfg.total_epochs;
  const double e = epoch, total = cfg.total_epochs;
  switch (cfg.direction) {
    case ScheduleDirection::AsWrittenDecay: return cfg.initial_rate * (ten_e - 9.0 * e) / ten_e;
    case ScheduleDirection::InvertedRamp: return cfg.initial_rate * (total + 9.0 * e) / ten_e;
  }
  return cfg.initial_rate;
}

std::vector<std::pair<std::string, std::vector<float>>> collect_bn_gammas(const ModelGraph& graph) {
  std::vector<std::pair<std::string, std::vector<float>>> out;
  for (const auto& n : graph.nodes())
    if (const auto* b = std::get_if<BatchNormNode>(&n.op)) out.emplace_back(n.id, b->gamma);
  return out;
}

double l1_penalty(std::span<const double> gammas, double rate) {
  double s = 0.0;
  for (double g : gammas) s += std::abs(g);
  return rate * s;
}

double l1_penalty(std::span<const float> gammas, double rate) {
  double s = 0.0;
  for (float g : gammas) s += std::abs(static_cast<double>(g));
  return rate * s;
}

std::vector<double> l1_subgradient(std::span<const double> gammas, double rate) {
  std::vector<double> out(gammas.size());
  for (std::size_t i = 0; i < gammas.size(); ++i)
    out[i] = gammas[i] > 0.0 ? rate : (gammas[i] < 0.0 ? -rate : 0.0);
  return out;
}

const char* direction_name(ScheduleDirection d) {
  return d == ScheduleDirection::InvertedRamp ? "inverted_ramp" : "as_written_decay";
}

ScheduleDirection parse_direction(const std::string& s) {
  if (s == "as_written_decay") return ScheduleDirection::AsWrittenDecay;
  if (s == "inverted_ramp") return ScheduleDirection::InvertedRamp;
  throw ConfigError("sparsity.direction", "expected 'as_written_decay' or 'inverted_ramp', got '" + s + "'");
}

}  // namespace slimcwd::sparsity
