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

#include "slimcwd/graph.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "slimcwd/error.hpp"

namespace slimcwd {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::SiLU: return "silu";
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::SiLU;
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw StructuralError("unknown activation '" + s + "'");
}

ConvNode parse_conv(const json& j, bool default_bias) {
  ConvNode c;
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  c.kernel = j.value("kernel", 1);
  c.stride = j.value("stride", 1);
  c.padding = j.value("padding", c.kernel / 2);
  c.has_bias = j.value("bias", default_bias);
  return c;
}

void write_conv_fields(json& j, const ConvNode& c) {
  j["in_channels"] = c.in_channels;
  j["out_channels"] = c.out_channels;
  j["kernel"] = c.kernel;
  j["stride"] = c.stride;
  j["padding"] = c.padding;
  j["bias"] = c.has_bias;
}

NodeOp parse_op(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "input") return InputNode{j.at("channels").get<int>()};
  if (kind == "conv") return parse_conv(j, false);
  if (kind == "head") return HeadNode{parse_conv(j, true)};
  if (kind == "bn") {
    BatchNormNode b;
    b.channels = j.at("channels").get<int>();
    b.epsilon = j.value("epsilon", 1e-5);
    return b;
  }
  if (kind == "act") return ActivationNode{parse_activation(j.value("fn", std::string("silu")))};
  if (kind == "concat") return ConcatNode{};
  if (kind == "add") return AddNode{};
  if (kind == "upsample") return UpsampleNode{j.value("factor", 2)};
  if (kind == "maxpool") {
    MaxPoolNode m;
    m.kernel = j.value("kernel", 5);
    m.stride = j.value("stride", 1);
    m.padding = j.value("padding", m.kernel / 2);
    return m;
  }
  throw StructuralError("unknown node kind '" + kind + "'");
}

json op_to_json(const Node& n) {
  json j;
  j["id"] = n.id;
  j["kind"] = std::string(kind_name(n.op));
  std::visit(overloaded{
                 [&](const InputNode& v) { j["channels"] = v.channels; },
                 [&](const ConvNode& v) { write_conv_fields(j, v); },
                 [&](const HeadNode& v) { write_conv_fields(j, v.conv); },
                 [&](const BatchNormNode& v) {
                   j["channels"] = v.channels;
                   j["epsilon"] = v.epsilon;
                 },
                 [&](const ActivationNode& v) { j["fn"] = activation_name(v.kind); },
                 [&](const ConcatNode&) {},
                 [&](const AddNode&) {},
                 [&](const UpsampleNode& v) { j["factor"] = v.factor; },
                 [&](const MaxPoolNode& v) {
                   j["kernel"] = v.kernel;
                   j["stride"] = v.stride;
                   j["padding"] = v.padding;
                 },
             },
             n.op);
  return j;
}

// Named float tensors of a node, in serialization order.
std::vector<std::pair<const char*, std::vector<float>*>> tensors_of(Node& n) {
  std::vector<std::pair<const char*, std::vector<float>*>> out;
  auto conv_tensors = [&](ConvNode& c) {
    out.emplace_back("weight", &c.weights);
    if (c.has_bias) out.emplace_back("bias", &c.bias);
  };
  if (auto* c = std::get_if<ConvNode>(&n.op)) conv_tensors(*c);
  if (auto* h = std::get_if<HeadNode>(&n.op)) conv_tensors(h->conv);
  if (auto* b = std::get_if<BatchNormNode>(&n.op)) {
    out.emplace_back("gamma", &b->gamma);
    out.emplace_back("beta", &b->beta);
    out.emplace_back("running_mean", &b->running_mean);
    out.emplace_back("running_var", &b->running_var);
  }
  return out;
}

void append_f32_le(std::vector<std::byte>& blob, const std::vector<float>& v) {
  const std::size_t at = blob.size();
  blob.resize(at + v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v[i]);
    for (int b = 0; b < 4; ++b) blob[at + i * 4 + b] = static_cast<std::byte>((bits >> (8 * b)) & 0xffu);
  }
}

std::vector<float> read_f32_le(const std::vector<std::byte>& blob, std::size_t offset, std::size_t count) {
  if (offset + count * 4 > blob.size()) throw StructuralError("weight blob too short");
  std::vector<float> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(blob[offset + i * 4 + b])) << (8 * b);
    v[i] = std::bit_cast<float>(bits);
  }
  return v;
}

void init_conv(ConvNode& c, std::mt19937_64& rng, float bias_init) {
  const std::size_t fan_in = static_cast<std::size_t>(c.in_channels) * c.kernel * c.kernel;
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / static_cast<double>(fan_in))));
  c.weights.resize(fan_in * c.out_channels);
  for (auto& w : c.weights) w = dist(rng);
  c.bias.assign(c.has_bias ? c.out_channels : 0, bias_init);
}

}  // namespace

std::string_view kind_name(const NodeOp& op) {
  return std::visit(overloaded{
                        [](const InputNode&) { return "input"; },
                        [](const ConvNode&) { return "conv"; },
                        [](const BatchNormNode&) { return "bn"; },
                        [](const ActivationNode&) { return "act"; },
                        [](const ConcatNode&) { return "concat"; },
                        [](const AddNode&) { return "add"; },
                        [](const UpsampleNode&) { return "upsample"; },
                        [](const MaxPoolNode&) { return "maxpool"; },
                        [](const HeadNode&) { return "head"; },
                    },
                    op);
}

ModelGraph::ModelGraph(std::vector<Node> nodes, TapGroups taps)
    : nodes_(std::move(nodes)), taps_(std::move(taps)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i].id, i).second) throw StructuralError("duplicate node id '" + nodes_[i].id + "'");
  }
  producers_.resize(nodes_.size());
  consumers_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& in : nodes_[i].inputs) {
      auto it = index_.find(in);
      if (it == index_.end())
        throw StructuralError("node '" + nodes_[i].id + "' references unknown producer '" + in + "'");
      producers_[i].push_back(it->second);
      consumers_[it->second].push_back(i);
    }
  }
}

ConvNode& ModelGraph::conv(std::size_t i) {
  if (auto* c = std::get_if<ConvNode>(&nodes_[i].op)) return *c;
  if (auto* h = std::get_if<HeadNode>(&nodes_[i].op)) return h->conv;
  throw StructuralError("node '" + nodes_[i].id + "' is not a convolution");
}

BatchNormNode& ModelGraph::batch_norm(std::size_t i) {
  if (auto* b = std::get_if<BatchNormNode>(&nodes_[i].op)) return *b;
  throw StructuralError("node '" + nodes_[i].id + "' is not a batch norm");
}

const ConvNode& ModelGraph::conv(std::size_t i) const { return const_cast<ModelGraph*>(this)->conv(i); }

const BatchNormNode& ModelGraph::batch_norm(std::size_t i) const {
  return const_cast<ModelGraph*>(this)->batch_norm(i);
}

const ConvNode* ModelGraph::conv_params(std::size_t i) const {
  if (const auto* c = std::get_if<ConvNode>(&nodes_[i].op)) return c;
  if (const auto* h = std::get_if<HeadNode>(&nodes_[i].op)) return &h->conv;
  return nullptr;
}

std::optional<std::size_t> ModelGraph::find(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ModelGraph::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw StructuralError("no node named '" + std::string(id) + "'");
  return it->second;
}

std::size_t ModelGraph::input_index() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (std::holds_alternative<InputNode>(nodes_[i].op)) return i;
  throw StructuralError("graph has no input node");
}

int ModelGraph::input_channels() const { return std::get<InputNode>(nodes_[input_index()].op).channels; }

std::vector<std::size_t> ModelGraph::outputs() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (consumers_[i].empty() && !std::holds_alternative<InputNode>(nodes_[i].op)) out.push_back(i);
  return out;
}

int ModelGraph::out_channels(std::size_t i) const {
  const auto& prod = producers_[i];
  return std::visit(overloaded{
                        [](const InputNode& v) { return v.channels; },
                        [](const ConvNode& v) { return v.out_channels; },
                        [](const HeadNode& v) { return v.conv.out_channels; },
                        [](const BatchNormNode& v) { return v.channels; },
                        [&](const ConcatNode&) {
                          int sum = 0;
                          for (auto p : prod) sum += out_channels(p);
                          return sum;
                        },
                        [&](const auto&) { return prod.empty() ? 0 : out_channels(prod.front()); },
                    },
                    nodes_[i].op);
}

std::vector<std::pair<std::string, std::string>> ModelGraph::edges() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& n : nodes_)
    for (const auto& in : n.inputs) out.emplace_back(in, n.id);
  return out;
}

std::vector<Violation> validate(const ModelGraph& g) {
  std::vector<Violation> out;
  auto fail = [&](const Node& n, std::string msg) { out.push_back({n.id, std::move(msg)}); };

  for (std::size_t i = 0; i < g.size(); ++i)
    for (auto p : g.producers(i))
      if (p >= i) fail(g.node(i), "producer '" + g.node(p).id + "' does not precede its consumer (cycle or bad order)");
  // Channel arithmetic below walks producers and needs an acyclic order.
  if (!out.empty()) return out;

  int input_count = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Node& n = g.node(i);
    const auto& prod = g.producers(i);
    const bool unary = !std::holds_alternative<InputNode>(n.op) && !std::holds_alternative<ConcatNode>(n.op) &&
                       !std::holds_alternative<AddNode>(n.op);
    if (unary && prod.size() != 1) fail(n, "expects exactly one producer, has " + std::to_string(prod.size()));
    const int in_ch = prod.empty() ? 0 : g.out_channels(prod.front());

    auto check_conv = [&](const ConvNode& c) {
      if (c.in_channels < 1 || c.out_channels < 1 || c.kernel < 1) fail(n, "non-positive conv dimension");
      if (c.stride < 1) fail(n, "stride must be >= 1");
      if (c.padding < 0) fail(n, "negative padding");
      if (prod.size() == 1 && c.in_channels != in_ch)
        fail(n, "declares " + std::to_string(c.in_channels) + " input channels but producers supply " +
                    std::to_string(in_ch));
      const std::size_t expect = static_cast<std::size_t>(std::max(c.out_channels, 0)) *
                                 std::max(c.in_channels, 0) * c.kernel * c.kernel;
      if (c.weights.size() != expect) fail(n, "weight array does not match [out, in, k, k]");
      if (c.bias.size() != (c.has_bias ? static_cast<std::size_t>(std::max(c.out_channels, 0)) : 0u))
        fail(n, "bias length does not match out_channels");
    };

    std::visit(overloaded{
                   [&](const InputNode& v) {
                     ++input_count;
                     if (v.channels < 1) fail(n, "input channels must be positive");
                     if (!prod.empty()) fail(n, "input node cannot have producers");
                   },
                   [&](const ConvNode& v) { check_conv(v); },
                   [&](const HeadNode& v) { check_conv(v.conv); },
                   [&](const BatchNormNode& v) {
                     const auto c = static_cast<std::size_t>(std::max(v.channels, 0));
                     if (v.channels < 1) fail(n, "channels must be positive");
                     if (prod.size() == 1 && v.channels != in_ch)
                       fail(n, "declares " + std::to_string(v.channels) + " channels but producer supplies " +
                                   std::to_string(in_ch));
                     if (v.gamma.size() != c || v.beta.size() != c || v.running_mean.size() != c ||
                         v.running_var.size() != c)
                       fail(n, "parameter vectors must all have length C");
                     if (!(v.epsilon > 0.0)) fail(n, "epsilon must be positive");
                     for (float var : v.running_var)
                       if (!(var >= 0.0f)) {
                         fail(n, "running_var must be non-negative");
                         break;
                       }
                   },
                   [&](const ActivationNode&) {},
                   [&](const ConcatNode&) {
                     if (prod.empty()) fail(n, "concat needs at least one producer");
                   },
                   [&](const AddNode&) {
                     if (prod.size() != 2) {
                       fail(n, "add needs exactly two producers");
                     } else if (g.out_channels(prod[0]) != g.out_channels(prod[1])) {
                       fail(n, "add over " + std::to_string(g.out_channels(prod[0])) + "ch and " +
                                   std::to_string(g.out_channels(prod[1])) + "ch producers");
                     }
                   },
                   [&](const UpsampleNode& v) {
                     if (v.factor < 1) fail(n, "upsample factor must be >= 1");
                   },
                   [&](const MaxPoolNode& v) {
                     if (v.kernel < 1 || v.stride < 1 || v.padding < 0) fail(n, "invalid pooling geometry");
                   },
               },
               n.op);
  }
  if (input_count != 1) out.push_back({"", "graph must have exactly one input, has " + std::to_string(input_count)});
  if (g.outputs().empty()) out.push_back({"", "graph has no output"});
  return out;
}

namespace {

// Kahn's algorithm, preferring declaration order among ready nodes.
std::vector<Node> topological_order(std::vector<Node> nodes) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!pos.emplace(nodes[i].id, i).second) throw StructuralError("duplicate node id '" + nodes[i].id + "'");
  std::vector<int> pending(nodes.size(), 0);
  std::vector<std::vector<std::size_t>> users(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& in : nodes[i].inputs) {
      auto it = pos.find(in);
      if (it == pos.end()) throw StructuralError("edge into '" + nodes[i].id + "' from unknown node '" + in + "'");
      ++pending[i];
      users[it->second].push_back(i);
    }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (pending[i] == 0) ready.insert(i);
  std::vector<Node> out;
  out.reserve(nodes.size());
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    for (auto u : users[i])
      if (--pending[u] == 0) ready.insert(u);
    out.push_back(std::move(nodes[i]));
  }
  if (out.size() != nodes.size()) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (pending[i] > 0) throw StructuralError("cycle detected through node '" + nodes[i].id + "'");
  }
  return out;
}

}  // namespace

ModelGraph build_graph(const json& spec, std::uint64_t seed, const std::vector<std::byte>* blob) {
  std::vector<Node> nodes;
  std::map<std::string, float> bias_init;
  for (const auto& jn : spec.at("nodes")) {
    const std::string id = jn.value("id", std::string());
    if (id.empty()) throw StructuralError("node without id");
    try {
      nodes.push_back(Node{id, {}, parse_op(jn)});
    } catch (const json::exception& e) {
      throw StructuralError("node '" + id + "': " + e.what());
    } catch (const StructuralError& e) {
      throw StructuralError("node '" + id + "': " + e.what());
    }
    if (jn.contains("bias_init")) bias_init[id] = jn["bias_init"].get<float>();
  }
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i].id] = i;
  for (const auto& je : spec.value("edges", json::array())) {
    const auto from = je.at("from").get<std::string>();
    const auto to = je.at("to").get<std::string>();
    auto it = pos.find(to);
    if (it == pos.end()) throw StructuralError("edge to unknown node '" + to + "'");
    nodes[it->second].inputs.push_back(from);
  }
  nodes = topological_order(std::move(nodes));

  TapGroups taps;
  if (spec.contains("taps")) taps = spec["taps"].get<TapGroups>();

  std::mt19937_64 rng(seed);
  for (auto& n : nodes) {
    const float b0 = bias_init.count(n.id) ? bias_init[n.id] : 0.0f;
    if (auto* c = std::get_if<ConvNode>(&n.op)) init_conv(*c, rng, b0);
    if (auto* h = std::get_if<HeadNode>(&n.op)) init_conv(h->conv, rng, b0);
    if (auto* b = std::get_if<BatchNormNode>(&n.op)) {
      const auto c = static_cast<std::size_t>(std::max(b->channels, 0));
      b->gamma.assign(c, 1.0f);
      b->beta.assign(c, 0.0f);
      b->running_mean.assign(c, 0.0f);
      b->running_var.assign(c, 1.0f);
    }
  }

  if (spec.contains("weights")) {
    if (blob == nullptr) throw StructuralError("graph document references a weight blob that was not supplied");
    std::map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < nodes.size(); ++i) at[nodes[i].id] = i;
    for (const auto& t : spec["weights"].at("tensors")) {
      const auto id = t.at("node").get<std::string>();
      const auto name = t.at("name").get<std::string>();
      auto it = at.find(id);
      if (it == at.end()) throw StructuralError("weight entry for unknown node '" + id + "'");
      bool placed = false;
      for (auto& [tname, vec] : tensors_of(nodes[it->second])) {
        if (name != tname) continue;
        *vec = read_f32_le(*blob, t.at("offset").get<std::size_t>(), t.at("count").get<std::size_t>());
        placed = true;
      }
      if (!placed) throw StructuralError("node '" + id + "' has no tensor named '" + name + "'");
    }
  }

  ModelGraph g(std::move(nodes), std::move(taps));
  const auto problems = validate(g);
  if (!problems.empty()) {
    const auto& v = problems.front();
    throw StructuralError((v.node.empty() ? std::string("graph") : "node '" + v.node + "'") + ": " + v.message);
  }
  return g;
}

GraphArchive to_archive(const ModelGraph& graph, const std::string& blob_name) {
  GraphArchive a;
  json nodes = json::array();
  json edges = json::array();
  json tensors = json::array();
  for (const auto& n : graph.nodes()) {
    nodes.push_back(op_to_json(n));
    for (const auto& in : n.inputs) edges.push_back({{"from", in}, {"to", n.id}});
    Node copy = n;
    for (auto& [name, vec] : tensors_of(copy)) {
      tensors.push_back({{"node", n.id}, {"name", name}, {"offset", a.blob.size()}, {"count", vec->size()}});
      append_f32_le(a.blob, *vec);
    }
  }
  a.document["format"] = "slimcwd-graph";
  a.document["version"] = 1;
  a.document["nodes"] = std::move(nodes);
  a.document["edges"] = std::move(edges);
  if (!graph.tap_groups().empty()) a.document["taps"] = graph.tap_groups();
  a.document["weights"] = {{"blob", blob_name}, {"encoding", "float32-le"}, {"tensors", std::move(tensors)}};
  return a;
}

ModelGraph from_archive(const GraphArchive& archive) { return build_graph(archive.document, 0, &archive.blob); }

void save_graph(const ModelGraph& graph, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto blob_path = path;
  blob_path.replace_extension(".bin");
  const auto archive = to_archive(graph, blob_path.filename().string());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << archive.document.dump(1) << '\n';
  }
  std::ofstream bin(blob_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot write " + blob_path.string());
  bin.write(reinterpret_cast<const char*>(archive.blob.data()), static_cast<std::streamsize>(archive.blob.size()));
}

ModelGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing graph file " + path.string());
  GraphArchive a;
  try {
    a.document = json::parse(in);
  } catch (const json::exception& e) {
    throw StructuralError(path.string() + ": " + e.what());
  }
  if (a.document.contains("weights")) {
    const auto blob_path = path.parent_path() / a.document["weights"].at("blob").get<std::string>();
    std::ifstream bin(blob_path, std::ios::binary);
    if (!bin) throw MissingArtifactError("missing weight blob " + blob_path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    a.blob.resize(bytes.size());
    std::memcpy(a.blob.data(), bytes.data(), bytes.size());
  }
  return from_archive(a);
}

}  // namespace slimcwd
