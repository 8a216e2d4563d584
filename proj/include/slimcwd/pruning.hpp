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

#ifndef SLIMCWD_PRUNING_HPP
#define SLIMCWD_PRUNING_HPP

#include <map>
#include <span>
#include <string>
#include <vector>

#include "slimcwd/graph.hpp"
#include "slimcwd/plan.hpp"
#include "slimcwd/surgery.hpp"

namespace slimcwd::pruning {

/// BN node id -> gamma.
using GammaMap = std::map<std::string, std::vector<float>>;

GammaMap gammas_of(const ModelGraph& graph);

/// Channel indices sorted by ascending |gamma|; ties keep index order.
std::vector<int> rank_channels(std::span<const float> gamma);

/// Sum of |gamma| over the group's slots.
double group_importance(const ChannelGroup& group, const GammaMap& gammas);

/// Survivors for a layer of `channels` channels:
/// max(C - floor(C * ratio), floor), then optionally raised to a multiple of
/// 8 (capped at C).
int kept_count(int channels, double ratio, int floor, Rounding rounding);

/// Per-layer plan at a fixed ratio. Every layer drops its least important
/// channels independently; a residual group is decided atomically by the
/// first layer (topological order) it touches, ranked by group_importance.
/// BN-less convs are never touched.
PruningPlan make_plan(const ModelGraph& graph, const GammaMap& gammas, double ratio, int floor = 2,
                      Rounding rounding = Rounding::None);

struct PruneResult {
  ModelGraph graph;
  /// Node id -> original channel index of each surviving channel, for every node.
  std::map<std::string, std::vector<int>> index_maps;
};

PruneResult prune(const ModelGraph& graph, const PruningPlan& plan);

}  // namespace slimcwd::pruning

#endif  // SLIMCWD_PRUNING_HPP
