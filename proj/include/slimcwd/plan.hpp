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

#ifndef SLIMCWD_PLAN_HPP
#define SLIMCWD_PLAN_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace slimcwd {

enum class Rounding { None, MultipleOf8 };

/// Which channels survive pruning.
///
/// `per_layer` is keyed by the id of a prunable batch-norm node (the BN of a
/// conv-BN unit) and lists kept channel indices in ascending order.
/// `index_maps` is keyed by any node id; entry j holds the original channel
/// index of surviving channel j, i.e. the inverse of the original->new map.
struct PruningPlan {
  double ratio = 0.5;
  int floor = 2;
  Rounding rounding = Rounding::None;
  std::map<std::string, std::vector<int>> per_layer;
  std::map<std::string, std::vector<int>> index_maps;
};

/// JSON form. Index maps are written as {"<original>": <new>} objects.
nlohmann::json plan_to_json(const PruningPlan& plan);
PruningPlan plan_from_json(const nlohmann::json& doc);
void save_plan(const PruningPlan& plan, const std::filesystem::path& path);
PruningPlan load_plan(const std::filesystem::path& path);

const char* rounding_name(Rounding r);
Rounding parse_rounding(const std::string& s);

}  // namespace slimcwd

#endif  // SLIMCWD_PLAN_HPP
