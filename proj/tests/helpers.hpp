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

#ifndef SLIMCWD_TESTS_HELPERS_HPP
#define SLIMCWD_TESTS_HELPERS_HPP

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slimcwd/graph.hpp"
#include "slimcwd/tensor.hpp"

namespace slimcwd::testing {

inline Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, float scale = 1.0f) {
  Tensor t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-scale, scale);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

inline std::vector<float> random_vector(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  for (auto& e : v) e = d(rng);
  return v;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// Incremental graph-spec writer for tests.
class SpecBuilder {
 public:
  explicit SpecBuilder(int input_channels) {
    doc_["nodes"] = nlohmann::json::array({{{"id", "input"}, {"kind", "input"}, {"channels", input_channels}}});
    doc_["edges"] = nlohmann::json::array();
  }
  SpecBuilder& conv(const std::string& id, const std::string& from, int in, int out, int k = 3, int stride = 1) {
    node({{"id", id}, {"kind", "conv"}, {"in_channels", in}, {"out_channels", out}, {"kernel", k}, {"stride", stride}},
         {from});
    return *this;
  }
  SpecBuilder& bn(const std::string& id, const std::string& from, int c) {
    node({{"id", id}, {"kind", "bn"}, {"channels", c}}, {from});
    return *this;
  }
  SpecBuilder& act(const std::string& id, const std::string& from, const std::string& fn = "silu") {
    node({{"id", id}, {"kind", "act"}, {"fn", fn}}, {from});
    return *this;
  }
  /// conv + bn + act named <id>, <id>_bn, <id>_act.
  SpecBuilder& cba(const std::string& id, const std::string& from, int in, int out, int k = 3, int stride = 1) {
    conv(id, from, in, out, k, stride);
    bn(id + "_bn", id, out);
    act(id + "_act", id + "_bn");
    return *this;
  }
  SpecBuilder& concat(const std::string& id, const std::vector<std::string>& from) {
    node({{"id", id}, {"kind", "concat"}}, from);
    return *this;
  }
  SpecBuilder& add(const std::string& id, const std::string& a, const std::string& b) {
    node({{"id", id}, {"kind", "add"}}, {a, b});
    return *this;
  }
  SpecBuilder& upsample(const std::string& id, const std::string& from, int f = 2) {
    node({{"id", id}, {"kind", "upsample"}, {"factor", f}}, {from});
    return *this;
  }
  SpecBuilder& maxpool(const std::string& id, const std::string& from, int k = 3) {
    node({{"id", id}, {"kind", "maxpool"}, {"kernel", k}, {"stride", 1}, {"padding", k / 2}}, {from});
    return *this;
  }
  SpecBuilder& head(const std::string& id, const std::string& from, int in, int out) {
    node({{"id", id}, {"kind", "head"}, {"in_channels", in}, {"out_channels", out}, {"kernel", 1}}, {from});
    return *this;
  }
  SpecBuilder& node(nlohmann::json n, const std::vector<std::string>& from) {
    for (const auto& f : from) doc_["edges"].push_back({{"from", f}, {"to", n["id"]}});
    doc_["nodes"].push_back(std::move(n));
    return *this;
  }
  const nlohmann::json& json() const { return doc_; }
  ModelGraph build(std::uint64_t seed = 1) const { return build_graph(doc_, seed); }

 private:
  nlohmann::json doc_;
};

/// Six convs with one residual Add and one Concat:
///   c1 -> c2 -> sum(c1, c2) -> c3 ----+
///   c1 ------------------------> c4 --+-> cat -> c5 -> head
inline SpecBuilder six_layer_spec() {
  SpecBuilder b(3);
  b.cba("c1", "input", 3, 8)
      .cba("c2", "c1_act", 8, 8)
      .add("sum", "c1_act", "c2_act")
      .cba("c3", "sum", 8, 8)
      .cba("c4", "c1_act", 8, 8)
      .concat("cat", {"c3_act", "c4_act"})
      .cba("c5", "cat", 16, 8)
      .head("head", "c5_act", 8, 4);
  return b;
}

/// Canonical bytes of a graph (document + weight blob).
inline std::string graph_bytes(const ModelGraph& g) {
  const auto a = to_archive(g, "g.bin");
  return a.document.dump() + std::string(reinterpret_cast<const char*>(a.blob.data()), a.blob.size());
}

}  // namespace slimcwd::testing

#endif  // SLIMCWD_TESTS_HELPERS_HPP
