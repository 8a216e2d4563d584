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

#include "slimcwd/surgery.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "slimcwd/error.hpp"

namespace slimcwd {
namespace {

bool is_unit(const ModelGraph& g, std::size_t i) {
  if (!std::holds_alternative<BatchNormNode>(g.node(i).op)) return false;
  const auto p = g.producers(i)[0];
  return std::holds_alternative<ConvNode>(g.node(p).op) && g.consumers(p).size() == 1;
}

// Channel provenance. Every unit channel gets a slot id; -1 marks a channel
// that no plan can remove.
struct SlotTable {
  std::vector<std::size_t> units;       // BN node indices
  std::map<std::size_t, int> unit_pos;  // node index -> position in `units`
  std::vector<int> offset;              // first slot id per unit
  std::vector<std::vector<int>> origin;  // per node output channel
  int slot_count = 0;

  ChannelSlot slot(const ModelGraph& g, int id) const {
    auto it = std::upper_bound(offset.begin(), offset.end(), id);
    const auto u = static_cast<std::size_t>(std::distance(offset.begin(), it) - 1);
    return {g.node(units[u]).id, id - offset[u]};
  }
};

SlotTable trace_slots(const ModelGraph& g) {
  SlotTable t;
  t.units = prunable_units(g);
  for (std::size_t u = 0; u < t.units.size(); ++u) {
    t.unit_pos[t.units[u]] = static_cast<int>(u);
    t.offset.push_back(t.slot_count);
    t.slot_count += g.out_channels(t.units[u]);
  }
  std::map<std::size_t, std::size_t> conv_to_unit;
  for (auto u : t.units) conv_to_unit[unit_conv(g, u)] = u;

  t.origin.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& op = g.node(i).op;
    const auto& prod = g.producers(i);
    auto& o = t.origin[i];
    auto unit_slots = [&](std::size_t unit) {
      const int base = t.offset[t.unit_pos.at(unit)];
      std::vector<int> s(g.out_channels(unit));
      std::iota(s.begin(), s.end(), base);
      return s;
    };
    if (std::holds_alternative<InputNode>(op) || std::holds_alternative<HeadNode>(op)) {
      o.assign(g.out_channels(i), -1);
    } else if (std::holds_alternative<ConvNode>(op)) {
      auto it = conv_to_unit.find(i);
      o = it != conv_to_unit.end() ? unit_slots(it->second) : std::vector<int>(g.out_channels(i), -1);
    } else if (std::holds_alternative<BatchNormNode>(op)) {
      o = t.unit_pos.count(i) ? unit_slots(i) : t.origin[prod[0]];
    } else if (std::holds_alternative<ConcatNode>(op)) {
      for (auto p : prod) o.insert(o.end(), t.origin[p].begin(), t.origin[p].end());
    } else {
      o = t.origin[prod[0]];  // add (first operand), activation, upsample, pool
    }
  }
  return t;
}

struct UnionFind {
  std::vector<int> parent;
  std::vector<bool> pinned;
  explicit UnionFind(int n) : parent(n), pinned(n, false) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
    pinned[a] = pinned[a] || pinned[b];
  }
};

// Follow single-consumer activations downstream of a unit and report whether
// its output ends up feeding more than one node.
bool fans_out(const ModelGraph& g, std::size_t unit) {
  std::size_t at = unit;
  while (g.consumers(at).size() == 1 && std::holds_alternative<ActivationNode>(g.node(g.consumers(at)[0]).op))
    at = g.consumers(at)[0];
  return g.consumers(at).size() > 1;
}

std::vector<int> all_channels(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<float> slice_rows(const std::vector<float>& v, const std::vector<int>& keep) {
  std::vector<float> out;
  out.reserve(keep.size());
  for (int k : keep) out.push_back(v[k]);
  return out;
}

}  // namespace

std::vector<std::size_t> prunable_units(const ModelGraph& g) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (is_unit(g, i)) out.push_back(i);
  return out;
}

std::size_t unit_conv(const ModelGraph& g, std::size_t unit) {
  if (!is_unit(g, unit)) throw StructuralError("node '" + g.node(unit).id + "' is not a prunable conv-BN unit");
  return g.producers(unit)[0];
}

std::vector<ChannelGroup> resolve_coupling(const ModelGraph& g) {
  const auto t = trace_slots(g);
  UnionFind uf(t.slot_count);
  std::vector<bool> touched(t.slot_count, false);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::holds_alternative<AddNode>(g.node(i).op)) continue;
    const auto& a = t.origin[g.producers(i)[0]];
    const auto& b = t.origin[g.producers(i)[1]];
    for (std::size_t c = 0; c < a.size(); ++c) {
      if (a[c] >= 0) touched[a[c]] = true;
      if (b[c] >= 0) touched[b[c]] = true;
      if (a[c] >= 0 && b[c] >= 0) {
        uf.unite(a[c], b[c]);
      } else if (a[c] >= 0) {
        uf.pinned[uf.find(a[c])] = true;
      } else if (b[c] >= 0) {
        uf.pinned[uf.find(b[c])] = true;
      }
    }
  }

  std::map<int, ChannelGroup> by_root;  // roots are the smallest slot id, i.e. topological order
  for (int s = 0; s < t.slot_count; ++s) {
    if (!touched[s]) continue;
    auto& grp = by_root[uf.find(s)];
    grp.members.push_back(t.slot(g, s));
  }
  std::vector<ChannelGroup> out;
  std::set<int> grouped;
  for (auto& [root, grp] : by_root) {
    grp.pinned = uf.pinned[root];
    if (grp.members.size() < 2 && !grp.pinned) continue;
    grp.reason = CouplingReason::ResidualAdd;
    for (int s = 0; s < t.slot_count; ++s)
      if (touched[s] && uf.find(s) == root) grouped.insert(s);
    out.push_back(std::move(grp));
  }
  for (std::size_t u = 0; u < t.units.size(); ++u) {
    if (!fans_out(g, t.units[u])) continue;
    const int c = g.out_channels(t.units[u]);
    for (int k = 0; k < c; ++k) {
      if (grouped.count(t.offset[u] + k)) continue;
      out.push_back({{ChannelSlot{g.node(t.units[u]).id, k}}, CouplingReason::SharedProducer, false});
    }
  }
  std::stable_sort(out.begin(), out.end(), [&](const ChannelGroup& x, const ChannelGroup& y) {
    auto key = [&](const ChannelGroup& grp) {
      const auto& m = grp.members.front();
      return std::pair{g.index_of(m.layer), m.channel};
    };
    return key(x) < key(y);
  });
  return out;
}

std::map<std::string, std::vector<int>> surviving_channels(const ModelGraph& g, const PruningPlan& plan) {
  std::map<std::size_t, const std::vector<int>*> planned;
  for (const auto& [id, kept] : plan.per_layer) {
    const auto i = g.find(id);
    if (!i) throw StructuralError("plan references unknown layer '" + id + "'");
    if (!is_unit(g, *i)) throw StructuralError("plan layer '" + id + "' is not a prunable conv-BN unit");
    if (kept.empty()) throw DegenerateLayerError("plan keeps no channels of layer '" + id + "'");
    const int c = g.out_channels(*i);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      if (kept[k] < 0 || kept[k] >= c)
        throw StructuralError("plan keeps out-of-range channel " + std::to_string(kept[k]) + " of '" + id + "'");
      if (k > 0 && kept[k] <= kept[k - 1])
        throw StructuralError("kept list of '" + id + "' must be sorted and unique");
    }
    planned[*i] = &kept;
  }

  auto is_kept = [&](const ChannelSlot& s) {
    auto it = plan.per_layer.find(s.layer);
    return it == plan.per_layer.end() || std::binary_search(it->second.begin(), it->second.end(), s.channel);
  };
  for (const auto& grp : resolve_coupling(g)) {
    const bool first = is_kept(grp.members.front());
    for (const auto& m : grp.members)
      if (is_kept(m) != first || (grp.pinned && !is_kept(m)))
        throw CouplingError("plan splits coupled channel group containing " + m.layer + "[" +
                            std::to_string(m.channel) + "]");
  }

  std::map<std::size_t, std::size_t> conv_to_unit;
  for (auto u : prunable_units(g)) conv_to_unit[unit_conv(g, u)] = u;

  std::vector<std::vector<int>> kept(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& op = g.node(i).op;
    const auto& prod = g.producers(i);
    auto own = [&](std::size_t unit) {
      auto it = planned.find(unit);
      return it != planned.end() ? *it->second : all_channels(g.out_channels(unit));
    };
    if (std::holds_alternative<InputNode>(op) || std::holds_alternative<HeadNode>(op)) {
      kept[i] = all_channels(g.out_channels(i));
    } else if (std::holds_alternative<ConvNode>(op)) {
      auto it = conv_to_unit.find(i);
      kept[i] = it != conv_to_unit.end() ? own(it->second) : all_channels(g.out_channels(i));
    } else if (std::holds_alternative<BatchNormNode>(op)) {
      kept[i] = is_unit(g, i) ? own(i) : kept[prod[0]];
    } else if (std::holds_alternative<ConcatNode>(op)) {
      int offset = 0;
      for (auto p : prod) {
        for (int k : kept[p]) kept[i].push_back(offset + k);
        offset += g.out_channels(p);
      }
    } else if (std::holds_alternative<AddNode>(op)) {
      if (kept[prod[0]] != kept[prod[1]])
        throw CouplingError("plan keeps different channels on the two operands of '" + g.node(i).id + "'");
      kept[i] = kept[prod[0]];
    } else {
      kept[i] = kept[prod[0]];
    }
  }
  std::map<std::string, std::vector<int>> out;
  for (std::size_t i = 0; i < g.size(); ++i) out[g.node(i).id] = std::move(kept[i]);
  return out;
}

ModelGraph apply_plan(const ModelGraph& g, const PruningPlan& plan) {
  const auto kept = surviving_channels(g, plan);
  std::vector<Node> nodes = g.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Node& n = nodes[i];
    const auto& out_keep = kept.at(n.id);
    auto slice_conv = [&](ConvNode& c) {
      const auto& in_keep = kept.at(g.node(g.producers(i)[0]).id);
      const int k2 = c.kernel * c.kernel;
      std::vector<float> w;
      w.reserve(out_keep.size() * in_keep.size() * k2);
      for (int oc : out_keep)
        for (int ic : in_keep) {
          const auto* src = c.weights.data() + (static_cast<std::size_t>(oc) * c.in_channels + ic) * k2;
          w.insert(w.end(), src, src + k2);
        }
      c.weights = std::move(w);
      if (c.has_bias) c.bias = slice_rows(c.bias, out_keep);
      c.in_channels = static_cast<int>(in_keep.size());
      c.out_channels = static_cast<int>(out_keep.size());
    };
    if (auto* c = std::get_if<ConvNode>(&n.op)) slice_conv(*c);
    if (auto* h = std::get_if<HeadNode>(&n.op)) slice_conv(h->conv);
    if (auto* b = std::get_if<BatchNormNode>(&n.op)) {
      b->gamma = slice_rows(b->gamma, out_keep);
      b->beta = slice_rows(b->beta, out_keep);
      b->running_mean = slice_rows(b->running_mean, out_keep);
      b->running_var = slice_rows(b->running_var, out_keep);
      b->channels = static_cast<int>(out_keep.size());
    }
  }
  ModelGraph out(std::move(nodes), g.tap_groups());
  const auto problems = validate(out);
  if (!problems.empty())
    throw StructuralError("rewritten graph is invalid at '" + problems.front().node + "': " + problems.front().message);
  return out;
}

}  // namespace slimcwd
