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

#include "slimcwd/plan.hpp"

#include <fstream>

#include "slimcwd/error.hpp"

namespace slimcwd {

using nlohmann::json;

const char* rounding_name(Rounding r) { return r == Rounding::MultipleOf8 ? "multiple_of_8" : "none"; }

Rounding parse_rounding(const std::string& s) {
  if (s == "none") return Rounding::None;
  if (s == "multiple_of_8") return Rounding::MultipleOf8;
  throw ConfigError("rounding", "expected 'none' or 'multiple_of_8', got '" + s + "'");
}

json plan_to_json(const PruningPlan& plan) {
  json maps = json::object();
  for (const auto& [id, kept] : plan.index_maps) {
    json m = json::object();
    for (std::size_t j = 0; j < kept.size(); ++j) m[std::to_string(kept[j])] = j;
    maps[id] = std::move(m);
  }
  return {{"format", "slimcwd-plan"},
          {"version", 1},
          {"ratio", plan.ratio},
          {"floor", plan.floor},
          {"rounding", rounding_name(plan.rounding)},
          {"per_layer", plan.per_layer},
          {"index_maps", std::move(maps)}};
}

PruningPlan plan_from_json(const json& doc) {
  PruningPlan p;
  try {
    p.ratio = doc.at("ratio").get<double>();
    p.floor = doc.at("floor").get<int>();
    p.rounding = parse_rounding(doc.at("rounding").get<std::string>());
    p.per_layer = doc.at("per_layer").get<std::map<std::string, std::vector<int>>>();
    const json maps = doc.value("index_maps", json::object());
    for (const auto& [id, m] : maps.items()) {
      std::vector<int> kept(m.size(), -1);
      for (const auto& [orig, pos] : m.items()) {
        const auto j = pos.get<std::size_t>();
        if (j >= kept.size()) throw StructuralError("index map for '" + id + "' is not a bijection");
        kept[j] = std::stoi(orig);
      }
      for (int k : kept)
        if (k < 0) throw StructuralError("index map for '" + id + "' is not a bijection");
      p.index_maps[id] = std::move(kept);
    }
  } catch (const json::exception& e) {
    throw StructuralError(std::string("malformed pruning plan: ") + e.what());
  }
  return p;
}

void save_plan(const PruningPlan& plan, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << plan_to_json(plan).dump(1) << '\n';
}

PruningPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing pruning plan " + path.string());
  try {
    return plan_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw StructuralError(path.string() + ": " + e.what());
  }
}

}  // namespace slimcwd
