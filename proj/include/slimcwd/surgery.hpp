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

#ifndef SLIMCWD_SURGERY_HPP
#define SLIMCWD_SURGERY_HPP

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "slimcwd/graph.hpp"
#include "slimcwd/plan.hpp"

namespace slimcwd {

/// One output channel of a prunable unit, named by the unit's BN node id.
struct ChannelSlot {
  std::string layer;
  int channel = 0;
  auto operator<=>(const ChannelSlot&) const = default;
};

enum class CouplingReason { ResidualAdd, SharedProducer };

/// Slots that must be kept or pruned together. `pinned` marks groups joined
/// (through an Add) to a channel no plan can remove, such as the graph input
/// or a BN-less conv; such groups are always kept.
struct ChannelGroup {
  std::vector<ChannelSlot> members;
  CouplingReason reason = CouplingReason::ResidualAdd;
  bool pinned = false;
};

/// Prunable units are BN nodes fed by a conv that has no other consumer.
/// Returned as BN node indices in topological order.
std::vector<std::size_t> prunable_units(const ModelGraph& graph);

/// Index of the conv feeding prunable BN `unit`.
std::size_t unit_conv(const ModelGraph& graph, std::size_t unit);

/// Add nodes pair channel i of both producers (transitively); a unit whose
/// output fans out to several consumers yields one singleton group per
/// channel. Concat never couples: its consumers are remapped by offset.
/// Groups are ordered by their first member in topological order and no slot
/// appears in two groups.
std::vector<ChannelGroup> resolve_coupling(const ModelGraph& graph);

/// Original channel indices surviving at every node under `plan`; layers
/// absent from the plan keep everything. Validates the plan.
std::map<std::string, std::vector<int>> surviving_channels(const ModelGraph& graph, const PruningPlan& plan);

/// Returns a new graph in which every planned unit keeps only the listed
/// filters, consumers keep the matching input slices (Concat offsets
/// remapped) and BN vectors are sliced. The input graph is not modified.
ModelGraph apply_plan(const ModelGraph& graph, const PruningPlan& plan);

}  // namespace slimcwd

#endif  // SLIMCWD_SURGERY_HPP
