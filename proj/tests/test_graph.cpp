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

#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "slimcwd/error.hpp"
#include "slimcwd/executor.hpp"
#include "slimcwd/graph.hpp"

using namespace slimcwd;
using slimcwd::testing::SpecBuilder;

TEST_CASE("build_graph: conv-bn-silu chain") {
  auto g = SpecBuilder(3).cba("c", "input", 3, 8).build();
  CHECK(g.size() == 4);  // input + 3
  CHECK(validate(g).empty());
  REQUIRE(g.outputs().size() == 1);
  CHECK(g.out_channels(g.outputs()[0]) == 8);
  const auto& bn = std::get<BatchNormNode>(g.node("c_bn").op);
  CHECK(bn.gamma == std::vector<float>(8, 1.0f));
  CHECK(bn.beta == std::vector<float>(8, 0.0f));
}

TEST_CASE("build_graph: concat channel arithmetic") {
  SpecBuilder ok(3);
  ok.cba("a", "input", 3, 8).cba("b", "input", 3, 8).concat("cat", {"a_act", "b_act"}).conv("c", "cat", 16, 4, 1);
  CHECK(validate(ok.build()).empty());

  SpecBuilder bad(3);
  bad.cba("a", "input", 3, 8).cba("b", "input", 3, 8).concat("cat", {"a_act", "b_act"}).conv("c", "cat", 12, 4, 1);
  try {
    bad.build();
    FAIL("expected StructuralError");
  } catch (const StructuralError& e) {
    CHECK(std::string(e.what()).find("'c'") != std::string::npos);
  }
}

TEST_CASE("build_graph: cycles are rejected") {
  nlohmann::json spec = SpecBuilder(3).conv("a", "input", 3, 3).conv("b", "a", 3, 3).json();
  spec["edges"].push_back({{"from", "b"}, {"to", "a"}});
  CHECK_THROWS_AS(build_graph(spec, 0), StructuralError);
}

TEST_CASE("build_graph is deterministic under a seed") {
  SpecBuilder s(3);
  s.cba("a", "input", 3, 8);
  auto g1 = s.build(5), g2 = s.build(5), g3 = s.build(6);
  CHECK(std::get<ConvNode>(g1.node("a").op).weights == std::get<ConvNode>(g2.node("a").op).weights);
  CHECK(std::get<ConvNode>(g1.node("a").op).weights != std::get<ConvNode>(g3.node("a").op).weights);
}

TEST_CASE("validate reports an add over mismatched producers") {
  SpecBuilder s(3);
  s.cba("a", "input", 3, 8).cba("b", "input", 3, 8).add("sum", "a_act", "b_act");
  auto nodes = s.build().nodes();
  // Shrink the second branch to 4 channels behind the builder's back.
  for (auto& n : nodes) {
    if (n.id == "b") {
      auto& c = std::get<ConvNode>(n.op);
      c.out_channels = 4;
      c.weights.resize(4 * 3 * 9);
    }
    if (n.id == "b_bn") {
      auto& b = std::get<BatchNormNode>(n.op);
      b.channels = 4;
      b.gamma.resize(4), b.beta.resize(4), b.running_mean.resize(4), b.running_var.resize(4);
    }
  }
  const auto v = validate(ModelGraph(nodes));
  REQUIRE(v.size() == 1);
  CHECK(v[0].node == "sum");
}

TEST_CASE("forward: batch-norm semantics in eval mode") {
  auto g = SpecBuilder(2).bn("bn", "input", 2).build();
  const Tensor x = testing::random_tensor(2, 2, 3, 3, 4);
  const auto st = forward(g, x, Mode::Eval);
  const Tensor& y = st.values[g.index_of("bn")];
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-5));

  g.batch_norm(g.index_of("bn")).gamma[1] = 0.0f;
  const auto st2 = forward(g, x, Mode::Eval);
  const Tensor& y2 = st2.values[g.index_of("bn")];
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 9; ++i) CHECK(y2.plane_ptr(n, 1)[i] == 0.0f);
}

TEST_CASE("forward: activations fix zero") {
  for (const char* fn : {"silu", "relu", "identity"}) {
    auto g = SpecBuilder(1).act("a", "input", fn).build();
    Tensor x(1, 1, 1, 1, 0.0f);
    CHECK(predict(g, x)[0].data()[0] == 0.0f);
  }
}

TEST_CASE("forward: train mode uses batch statistics and updates running estimates") {
  auto g = SpecBuilder(1).bn("bn", "input", 1).build();
  Tensor x(1, 1, 1, 4);
  x.values() = {1, 2, 3, 4};
  const auto st = forward(g, x, Mode::Train);
  const Tensor& y = st.values[g.index_of("bn")];
  double mean = 0, sq = 0;
  for (float v : y.values()) mean += v;
  for (float v : y.values()) sq += v * v;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
  CHECK(sq / 4 == doctest::Approx(1.0).epsilon(1e-4));
  update_running_stats(g, st, 0.1);
  const auto& bn = g.batch_norm(g.index_of("bn"));
  CHECK(bn.running_mean[0] == doctest::Approx(0.25));                    // 0.9*0 + 0.1*2.5
  CHECK(bn.running_var[0] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));  // unbiased 1.25*4/3
}

TEST_CASE("forward rejects wrong input channels") {
  auto g = SpecBuilder(3).cba("c", "input", 3, 4).build();
  CHECK_THROWS_AS(forward(g, Tensor(1, 2, 8, 8), Mode::Eval), ShapeError);
}

TEST_CASE("feature maps are retrievable by node id") {
  auto g = SpecBuilder(3).cba("c", "input", 3, 4).build();
  const auto st = forward(g, testing::random_tensor(1, 3, 5, 5, 1), Mode::Eval);
  CHECK(st.value(g, "c_bn").channels() == 4);
  CHECK(st.value(g, "c_act").height() == 5);
}

namespace {

SpecBuilder mixed_graph() {
  SpecBuilder s(2);
  s.cba("a", "input", 2, 4, 3, 1)
      .cba("b", "a_act", 4, 4, 3, 1)
      .add("res", "a_act", "b_act")
      .maxpool("mp", "res", 3)
      .concat("cat", {"res", "mp"})
      .cba("d", "cat", 8, 3, 1, 2)
      .upsample("up", "d_act")
      .head("h", "up", 3, 2);
  return s;
}

double scalar_loss(const ModelGraph& g, const Tensor& x, const Tensor& probe, Mode mode) {
  const auto out = forward(g, x, mode).values[g.index_of("h")];
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(out.data()[i]) * probe.data()[i];
  return s;
}

}  // namespace

TEST_CASE("backward matches central finite differences through every node kind") {
  for (Mode mode : {Mode::Eval, Mode::Train}) {
    auto g = mixed_graph().build(3);
    // Non-trivial BN state so eval mode is not the identity.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (std::holds_alternative<BatchNormNode>(g.node(i).op)) {
        auto& b = g.batch_norm(i);
        b.gamma = testing::random_vector(b.channels, i, 0.5f, 1.5f);
        b.beta = testing::random_vector(b.channels, i + 100, -0.2f, 0.2f);
        b.running_var = testing::random_vector(b.channels, i + 200, 0.5f, 2.0f);
      }
    const Tensor x = testing::random_tensor(2, 2, 6, 6, 9);
    const auto st = forward(g, x, mode);
    const auto hi = g.index_of("h");
    const Tensor probe = testing::random_tensor(2, 2, 6, 6, 10);
    const std::vector<std::pair<std::size_t, Tensor>> seeds{{hi, probe}};
    const auto grads = backward(g, st, seeds);

    auto check_param = [&](std::size_t node, std::vector<float>& param, const std::vector<float>& analytic) {
      REQUIRE(param.size() == analytic.size());
      for (std::size_t k = 0; k < param.size(); k += 3) {
        const float keep = param[k];
        const float h = 1e-2f;
        param[k] = keep + h;
        const double up = scalar_loss(g, x, probe, mode);
        param[k] = keep - h;
        const double down = scalar_loss(g, x, probe, mode);
        param[k] = keep;
        const double fd = (up - down) / (2.0 * h);
        CAPTURE(g.node(node).id);
        CAPTURE(k);
        CHECK(analytic[k] == doctest::Approx(fd).epsilon(2e-2).scale(1.0));
      }
    };
    for (const char* id : {"a", "b", "d", "h"}) {
      const auto i = g.index_of(id);
      check_param(i, g.conv(i).weights, grads.params[i].weight);
    }
    for (const char* id : {"a_bn", "b_bn", "d_bn"}) {
      const auto i = g.index_of(id);
      check_param(i, g.batch_norm(i).gamma, grads.params[i].weight);
      check_param(i, g.batch_norm(i).beta, grads.params[i].bias);
    }
  }
}

TEST_CASE("graph serialization round-trips bit-exactly") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto g = mixed_graph().build(seed);
    auto& b = g.batch_norm(g.index_of("a_bn"));
    b.running_mean = testing::random_vector(4, seed);
    b.gamma[0] = -0.0f;
    const auto a1 = to_archive(g, "w.bin");
    const auto g2 = from_archive(a1);
    const auto a2 = to_archive(g2, "w.bin");
    CHECK(a1.document == a2.document);
    CHECK(a1.blob == a2.blob);
    CHECK(std::signbit(std::get<BatchNormNode>(g2.node("a_bn").op).gamma[0]));
  }
}

TEST_CASE("weight blob is little-endian float32") {
  auto g = SpecBuilder(1).conv("c", "input", 1, 1, 1).build();
  g.conv(g.index_of("c")).weights = {1.0f};
  const auto a = to_archive(g, "w.bin");
  REQUIRE(a.blob.size() == 4);
  CHECK(std::to_integer<int>(a.blob[0]) == 0x00);
  CHECK(std::to_integer<int>(a.blob[2]) == 0x80);
  CHECK(std::to_integer<int>(a.blob[3]) == 0x3f);
}
