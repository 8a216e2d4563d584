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

#include "slimcwd/zoo.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "slimcwd/error.hpp"

namespace slimcwd::zoo {

using nlohmann::json;

namespace {

class Writer {
 public:
  Writer() {
    doc_["nodes"] = json::array({{{"id", "input"}, {"kind", "input"}, {"channels", 3}}});
    doc_["edges"] = json::array();
  }

  void node(json n, const std::vector<std::string>& from) {
    for (const auto& f : from) doc_["edges"].push_back({{"from", f}, {"to", n["id"]}});
    doc_["nodes"].push_back(std::move(n));
  }

  // conv -> bn -> silu, leaving <id>_act as the output.
  void cba(const std::string& id, const std::string& from, int in, int out, int k, int stride) {
    node({{"id", id}, {"kind", "conv"}, {"in_channels", in}, {"out_channels", out}, {"kernel", k}, {"stride", stride}},
         {from});
    node({{"id", id + "_bn"}, {"kind", "bn"}, {"channels", out}}, {id});
    node({{"id", id + "_act"}, {"kind", "act"}, {"fn", "silu"}}, {id + "_bn"});
  }

  json take() { return std::move(doc_); }

 private:
  json doc_;
};

}  // namespace

json toy_detector_spec(int num_classes, double width) {
  if (num_classes < 1) throw ConfigError("task.num_classes", "must be positive");
  if (!(width > 0.0)) throw ConfigError("model.width", "must be positive");
  auto ch = [width](int c) { return std::max(2, static_cast<int>(std::lround(c * width))); };
  const int c1 = ch(16), c2 = ch(32), c3 = ch(64), cn = ch(32);

  Writer w;
  w.cba("stem", "input", 3, c1, 3, 2);
  w.cba("down1", "stem_act", c1, c2, 3, 2);
  w.cba("res_a", "down1_act", c2, c2, 3, 1);
  w.cba("res_b", "res_a_act", c2, c2, 3, 1);
  w.node({{"id", "res_add"}, {"kind", "add"}}, {"down1_act", "res_b_act"});
  w.cba("down2", "res_add", c2, c3, 3, 2);
  w.node({{"id", "pool1"}, {"kind", "maxpool"}, {"kernel", 3}, {"stride", 1}, {"padding", 1}}, {"down2_act"});
  w.node({{"id", "spp"}, {"kind", "concat"}}, {"down2_act", "pool1"});
  w.cba("spp_conv", "spp", 2 * c3, cn, 1, 1);
  w.node({{"id", "up"}, {"kind", "upsample"}, {"factor", 2}}, {"spp_conv_act"});
  w.node({{"id", "fuse"}, {"kind", "concat"}}, {"up", "res_add"});
  w.cba("neck", "fuse", cn + c2, cn, 3, 1);
  w.node({{"id", "head"},
          {"kind", "head"},
          {"in_channels", cn},
          {"out_channels", num_classes},
          {"kernel", 1},
          {"bias_init", -2.0}},
         {"neck_act"});
  json doc = w.take();
  doc["taps"] = {{"neck", {"spp_conv_act", "neck_act"}}, {"backbone", {"down1_act", "res_add", "down2_act"}}};
  return doc;
}

}  // namespace slimcwd::zoo
