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

#include "slimcwd/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "slimcwd/error.hpp"
#include "slimcwd/sparsity.hpp"

namespace slimcwd::pruning {

GammaMap gammas_of(const ModelGraph& graph) {
  GammaMap out;
  for (auto& [id, g] : sparsity::collect_bn_gammas(graph)) out[id] = std::move(g);
  return out;
}

std::vector<int> rank_channels(std::span<const float> gamma) {
  if (gamma.empty()) throw DomainError("cannot rank an empty gamma vector");
  std::vector<int> order(gamma.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(gamma[a]) < std::abs(gamma[b]); });
  return order;
}

double group_importance(const ChannelGroup& group, const GammaMap& gammas) {
  double s = 0.0;
  for (const auto& m : group.members) {
    auto it = gammas.find(m.layer);
    if (it == gammas.end() || m.channel < 0 || m.channel >= static_cast<int>(it->second.size()))
      throw StructuralError("group member " + m.layer + "[" + std::to_string(m.channel) + "] does not resolve");
    s += std::abs(static_cast<double>(it->second[m.channel]));
  }
  return s;
}

int kept_count(int channels, double ratio, int floor, Rounding rounding) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("pruning ratio must lie in [0, 1), got " + std::to_string(ratio));
  if (floor < 1) throw DomainError("pruning floor must be >= 1");
  // Tolerance absorbs representation error, e.g. 100 * 0.57 = 56.999...
  const int pruned = static_cast<int>(std::floor(channels * ratio + 1e-9));
  int kept = std::min(channels, std::max(channels - pruned, floor));
  if (rounding == Rounding::MultipleOf8) kept = std::min(channels, (kept + 7) / 8 * 8);
  return kept;
}

PruningPlan make_plan(const ModelGraph& graph, const GammaMap& gammas, double ratio, int floor, Rounding rounding) {
  kept_count(1, ratio, floor, rounding);  // argument checks

  PruningPlan plan;
  plan.ratio = ratio;
  plan.floor = floor;
  plan.rounding = rounding;

  std::vector<ChannelGroup> groups;
  for (auto& g : resolve_coupling(graph))
    if (g.reason == CouplingReason::ResidualAdd) groups.push_back(std::move(g));
  std::map<ChannelSlot, std::size_t> group_of;
  for (std::size_t k = 0; k < groups.size(); ++k)
    for (const auto& m : groups[k].members) group_of[m] = k;
  std::map<ChannelSlot, bool> fate;  // true = keep

  for (auto unit : prunable_units(graph)) {
    const std::string& id = graph.node(unit).id;
    auto git = gammas.find(id);
    if (git == gammas.end()) throw StructuralError("no gamma supplied for layer '" + id + "'");
    const auto& gamma = git->second;
    const int C = graph.out_channels(unit);
    if (static_cast<int>(gamma.size()) != C) throw StructuralError("gamma of '" + id + "' has the wrong length");
    const int target = kept_count(C, ratio, floor, rounding);

    struct Item {
      double importance;
      int first_channel;
      std::vector<int> channels;
      std::optional<std::size_t> group;
      bool pinned = false;
    };
    std::vector<Item> items;
    std::map<std::size_t, std::size_t> item_of_group;
    int decided_pruned = 0;
    for (int c = 0; c < C; ++c) {
      const ChannelSlot slot{id, c};
      if (auto f = fate.find(slot); f != fate.end()) {
        decided_pruned += f->second ? 0 : 1;
        continue;
      }
      auto gi = group_of.find(slot);
      if (gi == group_of.end()) {
        items.push_back({std::abs(static_cast<double>(gamma[c])), c, {c}, std::nullopt, false});
        continue;
      }
      auto [it, fresh] = item_of_group.emplace(gi->second, items.size());
      if (fresh) {
        const auto& grp = groups[gi->second];
        items.push_back({group_importance(grp, gammas), c, {}, gi->second, grp.pinned});
      }
      items[it->second].channels.push_back(c);
    }

    int to_prune = C - target - decided_pruned;
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
      return a.importance != b.importance ? a.importance < b.importance : a.first_channel < b.first_channel;
    });
    std::vector<bool> prune_item(items.size(), false);
    for (std::size_t k = 0; k < items.size() && to_prune > 0; ++k) {
      const int width = static_cast<int>(items[k].channels.size());
      if (items[k].pinned || width > to_prune) continue;
      prune_item[k] = true;
      to_prune -= width;
    }
    for (std::size_t k = 0; k < items.size(); ++k) {
      const bool keep = !prune_item[k];
      if (items[k].group) {
        for (const auto& m : groups[*items[k].group].members) fate[m] = keep;
      } else {
        fate[{id, items[k].channels.front()}] = keep;
      }
    }

    std::vector<int> kept;
    for (int c = 0; c < C; ++c)
      if (fate.at({id, c})) kept.push_back(c);
    plan.index_maps[id] = kept;
    plan.per_layer[id] = std::move(kept);
  }
  return plan;
}

PruneResult prune(const ModelGraph& graph, const PruningPlan& plan) {
  auto maps = surviving_channels(graph, plan);
  return {apply_plan(graph, plan), std::move(maps)};
}

}  // namespace slimcwd::pruning
