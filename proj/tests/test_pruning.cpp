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

#include <algorithm>
#include <random>
#include <set>

#include <doctest.h>

#include "helpers.hpp"
#include "slimcwd/error.hpp"
#include "slimcwd/profiler.hpp"
#include "slimcwd/pruning.hpp"
#include "slimcwd/surgery.hpp"

using namespace slimcwd;
using namespace slimcwd::pruning;
using testing::SpecBuilder;

namespace {

void set_gamma(ModelGraph& g, const std::string& bn, const std::vector<float>& gamma) {
  g.batch_norm(*g.find(bn)).gamma = gamma;
}

void randomize_gammas(ModelGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (auto u : prunable_units(g))
    for (auto& v : g.batch_norm(u).gamma) v = d(rng);
}

}  // namespace

TEST_CASE("rank_channels examples") {
  CHECK(rank_channels(std::vector<float>{0.3f, 0.1f, 0.2f}) == std::vector<int>{1, 2, 0});
  CHECK(rank_channels(std::vector<float>{0.1f, 0.1f, 0.5f}) == std::vector<int>{0, 1, 2});
  CHECK(rank_channels(std::vector<float>{-0.4f, 0.2f}) == std::vector<int>{1, 0});
  CHECK_THROWS_AS(rank_channels(std::vector<float>{}), DomainError);
}

TEST_CASE("group_importance sums magnitudes") {
  GammaMap gm{{"A", {0, 0, 0, 0.2f}}, {"B", {0, 0, 0, -0.1f}}};
  ChannelGroup g{{{"A", 3}, {"B", 3}}, CouplingReason::ResidualAdd, false};
  CHECK(group_importance(g, gm) == doctest::Approx(0.3));
  ChannelGroup single{{{"A", 0}}, CouplingReason::SharedProducer, false};
  CHECK(group_importance(single, gm) == 0.0);
  ChannelGroup dangling{{{"gone", 0}}, CouplingReason::ResidualAdd, false};
  CHECK_THROWS_AS(group_importance(dangling, gm), StructuralError);
  ChannelGroup out_of_range{{{"A", 9}}, CouplingReason::ResidualAdd, false};
  CHECK_THROWS_AS(group_importance(out_of_range, gm), StructuralError);
}

TEST_CASE("kept_count rules") {
  CHECK(kept_count(64, 0.5, 2, Rounding::None) == 32);
  CHECK(kept_count(10, 0.5, 8, Rounding::None) == 8);
  CHECK(kept_count(7, 0.5, 2, Rounding::None) == 4);
  CHECK(kept_count(3, 0.9, 2, Rounding::None) == 2);
  CHECK(kept_count(1, 0.5, 2, Rounding::None) == 1);
  CHECK(kept_count(20, 0.5, 2, Rounding::MultipleOf8) == 16);
  CHECK(kept_count(12, 0.5, 2, Rounding::MultipleOf8) == 8);
  CHECK(kept_count(20, 0.3, 2, Rounding::MultipleOf8) == 16);
  CHECK(kept_count(20, 0.1, 2, Rounding::MultipleOf8) == 20);
  CHECK(kept_count(64, 0.0, 2, Rounding::None) == 64);
  CHECK_THROWS_AS(kept_count(8, 1.0, 2, Rounding::None), DomainError);
  CHECK_THROWS_AS(kept_count(8, -0.1, 2, Rounding::None), DomainError);
  CHECK_THROWS_AS(kept_count(8, 0.5, 0, Rounding::None), DomainError);
}

TEST_CASE("make_plan drops the smallest gammas") {
  auto g = SpecBuilder(3).cba("a", "input", 3, 4).head("h", "a_act", 4, 2).build();
  set_gamma(g, "a_bn", {0.9f, 0.01f, 0.5f, 0.02f});
  const auto plan = make_plan(g, gammas_of(g), 0.5);
  CHECK(plan.per_layer.at("a_bn") == std::vector<int>{0, 2});
  CHECK(plan.per_layer.count("h") == 0);
  CHECK_THROWS_AS(make_plan(g, gammas_of(g), 1.0), DomainError);
}

TEST_CASE("make_plan on a 64-channel layer keeps 32") {
  auto g = SpecBuilder(3).cba("a", "input", 3, 64).head("h", "a_act", 64, 2).build();
  randomize_gammas(g, 1);
  CHECK(make_plan(g, gammas_of(g), 0.5).per_layer.at("a_bn").size() == 32);
}

TEST_CASE("prune index maps") {
  auto g = SpecBuilder(3).cba("a", "input", 3, 8).head("h", "a_act", 8, 2).build();
  PruningPlan keep_all;
  keep_all.per_layer["a_bn"] = {0, 1, 2, 3, 4, 5, 6, 7};
  for (const auto& [id, m] : prune(g, keep_all).index_maps) {
    for (std::size_t j = 0; j < m.size(); ++j) CHECK(m[j] == static_cast<int>(j));
  }
  PruningPlan some;
  some.per_layer["a_bn"] = {0, 2, 5, 7};
  const auto r = prune(g, some);
  CHECK(r.index_maps.at("a_bn") == std::vector<int>{0, 2, 5, 7});
  CHECK(r.index_maps.at("a_act") == std::vector<int>{0, 2, 5, 7});
  // Serialized form is original -> new.
  const auto doc = plan_to_json(PruningPlan{0.5, 2, Rounding::None, some.per_layer, r.index_maps});
  CHECK(doc["index_maps"]["a_bn"] == nlohmann::json{{"0", 0}, {"2", 1}, {"5", 2}, {"7", 3}});
  CHECK(plan_from_json(doc).index_maps == r.index_maps);
}

TEST_CASE("halving both layers of a chain quarters the middle conv") {
  auto g = SpecBuilder(3).cba("a", "input", 3, 16).cba("b", "a_act", 16, 32).conv("c", "b_act", 32, 4).build();
  randomize_gammas(g, 5);
  const auto pr = prune(g, make_plan(g, gammas_of(g), 0.5));
  CHECK(g.conv(*g.find("b")).weights.size() == 16u * 32 * 9);
  CHECK(pr.graph.conv(*pr.graph.find("b")).weights.size() == 8u * 16 * 9);
  CHECK(pr.graph.conv(*pr.graph.find("c")).out_channels == 4);
}

TEST_CASE("property: budget exactness on uncoupled layers") {
  for (int C : {3, 5, 8, 13, 32, 47}) {
    for (double r : {0.0, 0.1, 0.25, 0.5, 0.7, 0.95}) {
      for (int fl : {1, 2, 4}) {
        auto g = SpecBuilder(3).cba("a", "input", 3, C).head("h", "a_act", C, 2).build();
        randomize_gammas(g, C * 100 + fl);
        const auto plan = make_plan(g, gammas_of(g), r, fl);
        const int expect = std::min(C, std::max(C - static_cast<int>(std::floor(C * r)), fl));
        CHECK(static_cast<int>(plan.per_layer.at("a_bn").size()) == expect);
      }
    }
  }
}

TEST_CASE("property: multiple_of_8 rounding is sound") {
  for (int C : {4, 9, 16, 20, 33, 64, 70}) {
    for (double r : {0.1, 0.3, 0.5, 0.8}) {
      auto g = SpecBuilder(3).cba("a", "input", 3, C).head("h", "a_act", C, 2).build();
      randomize_gammas(g, C);
      const auto n = make_plan(g, gammas_of(g), r, 2, Rounding::MultipleOf8).per_layer.at("a_bn").size();
      CHECK((n % 8 == 0 || static_cast<int>(n) == C));
      CHECK(static_cast<int>(n) >= kept_count(C, r, 2, Rounding::None));
    }
  }
}

TEST_CASE("property: coupled groups share one fate") {
  for (int seed = 0; seed < 30; ++seed) {
    auto g = testing::six_layer_spec().build(seed);
    randomize_gammas(g, seed);
    const auto plan = make_plan(g, gammas_of(g), 0.1 + 0.03 * seed);
    for (const auto& group : resolve_coupling(g)) {
      std::set<bool> fates;
      for (const auto& m : group.members) {
        const auto& kept = plan.per_layer.at(m.layer);
        fates.insert(std::binary_search(kept.begin(), kept.end(), m.channel));
      }
      CHECK(fates.size() == 1);
    }
    CHECK(validate(apply_plan(g, plan)).empty());
  }
}

TEST_CASE("residual group is ranked by summed importance") {
  auto g = testing::six_layer_spec().build();
  set_gamma(g, "c1_bn", {0.9f, 0.1f, 0.8f, 0.2f, 0.7f, 0.3f, 0.6f, 0.4f});
  set_gamma(g, "c2_bn", {0.0f, 0.9f, 0.1f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f});
  // Sums: 0.9 1.0 0.9 0.2 0.7 0.3 0.6 0.4 -> drop 3, 5, 7, 6.
  const auto plan = make_plan(g, gammas_of(g), 0.5);
  CHECK(plan.per_layer.at("c1_bn") == std::vector<int>{0, 1, 2, 4});
  CHECK(plan.per_layer.at("c2_bn") == std::vector<int>{0, 1, 2, 4});
}

TEST_CASE("property: plans are nested in the ratio") {
  for (int seed = 0; seed < 20; ++seed) {
    auto g = SpecBuilder(3).cba("a", "input", 3, 24).cba("b", "a_act", 24, 16).head("h", "b_act", 16, 2).build();
    randomize_gammas(g, seed);
    const auto gm = gammas_of(g);
    for (double r1 = 0.0; r1 < 0.9; r1 += 0.15) {
      const auto p1 = make_plan(g, gm, r1), p2 = make_plan(g, gm, r1 + 0.1);
      for (const auto& [layer, kept2] : p2.per_layer) {
        const auto& kept1 = p1.per_layer.at(layer);
        CHECK(std::includes(kept1.begin(), kept1.end(), kept2.begin(), kept2.end()));
      }
    }
  }
}

TEST_CASE("property: pruned parameter count matches the plan analytically") {
  for (int seed = 0; seed < 10; ++seed) {
    auto g = testing::six_layer_spec().build(seed);
    randomize_gammas(g, seed + 50);
    const auto plan = make_plan(g, gammas_of(g), 0.25 + 0.05 * seed);
    auto k = [&](const char* bn) { return static_cast<std::int64_t>(plan.per_layer.at(bn).size()); };
    // c1/c2 share their width through the residual add; cat = c3 + c4.
    const std::int64_t w12 = k("c1_bn"), w3 = k("c3_bn"), w4 = k("c4_bn"), w5 = k("c5_bn");
    const std::int64_t expect = 3 * w12 * 9 + 2 * w12    // c1
                                + w12 * w12 * 9 + 2 * w12  // c2
                                + w12 * w3 * 9 + 2 * w3    // c3
                                + w12 * w4 * 9 + 2 * w4    // c4
                                + (w3 + w4) * w5 * 9 + 2 * w5  // c5
                                + w5 * 4 + 4;                  // head (1x1 with bias)
    CHECK(profiler::count_params(prune(g, plan).graph) == expect);
  }
}

TEST_CASE("pinned residual groups are always kept") {
  auto g = SpecBuilder(3).cba("a", "input", 3, 3).add("sum", "input", "a_act").cba("b", "sum", 3, 8).build();
  randomize_gammas(g, 2);
  const auto plan = make_plan(g, gammas_of(g), 0.5);
  CHECK(plan.per_layer.at("a_bn").size() == 3);
  CHECK(plan.per_layer.at("b_bn").size() == 4);
  CHECK(validate(prune(g, plan).graph).empty());
}
