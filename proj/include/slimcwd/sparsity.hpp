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

#ifndef SLIMCWD_SPARSITY_HPP
#define SLIMCWD_SPARSITY_HPP

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slimcwd/graph.hpp"

namespace slimcwd::sparsity {

enum class ScheduleDirection {
  /// rate(e) = initial * (1 - 0.9 e / E): strongest penalty at the start.
  AsWrittenDecay,
  /// rate(e) = initial * (0.1 + 0.9 e / E): penalty grows over training.
  InvertedRamp,
};

struct ScheduleConfig {
  double initial_rate = 0.005;
  int total_epochs = 100;
  ScheduleDirection direction = ScheduleDirection::AsWrittenDecay;
};

/// L1 strength on BN scaling factors for epoch `epoch` in [0, total_epochs].
/// Always within [0.1 * initial_rate, initial_rate].
double sparsity_rate(int epoch, const ScheduleConfig& cfg);

/// Every BN node's gamma, in topological order.
std::vector<std::pair<std::string, std::vector<float>>> collect_bn_gammas(const ModelGraph& graph);

/// rate * sum |gamma_i|.
double l1_penalty(std::span<const double> gammas, double rate);
double l1_penalty(std::span<const float> gammas, double rate);

/// rate * sign(gamma_i) with sign(0) = 0.
std::vector<double> l1_subgradient(std::span<const double> gammas, double rate);

const char* direction_name(ScheduleDirection d);
ScheduleDirection parse_direction(const std::string& s);

}  // namespace slimcwd::sparsity

#endif  // SLIMCWD_SPARSITY_HPP
