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

#ifndef SLIMCWD_GRAPH_HPP
#define SLIMCWD_GRAPH_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace slimcwd {

enum class Activation { SiLU, ReLU, Identity };

struct InputNode {
  int channels = 3;
};

/// Dense square-kernel convolution; weights are [out, in, k, k] row-major.
struct ConvNode {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool has_bias = false;
  std::vector<float> weights;
  std::vector<float> bias;
};

/// out = gamma * (x - mean) / sqrt(var + epsilon) + beta, per channel.
struct BatchNormNode {
  int channels = 1;
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  double epsilon = 1e-5;
};

struct ActivationNode {
  Activation kind = Activation::SiLU;
};

/// Channel concatenation in input-edge order.
struct ConcatNode {};
struct AddNode {};

/// Nearest-neighbour upsampling by an integer factor.
struct UpsampleNode {
  int factor = 2;
};

/// Max pooling; SPPF-style chains are expressed as successive pool nodes
/// feeding a Concat.
struct MaxPoolNode {
  int kernel = 5;
  int stride = 1;
  int padding = 2;
};

/// Prediction conv without batch norm. Never pruned.
struct HeadNode {
  ConvNode conv;
};

using NodeOp = std::variant<InputNode, ConvNode, BatchNormNode, ActivationNode, ConcatNode, AddNode,
                            UpsampleNode, MaxPoolNode, HeadNode>;

struct Node {
  std::string id;
  std::vector<std::string> inputs;  // ordered producers
  NodeOp op;
};

std::string_view kind_name(const NodeOp& op);

/// Named lists of feature-producing nodes, used as distillation tap presets.
using TapGroups = std::map<std::string, std::vector<std::string>>;

/// A convolutional network as a DAG. Nodes are stored in topological order;
/// producer lists keep their edge order, which matters for Concat.
class ModelGraph {
 public:
  ModelGraph() = default;
  /// Nodes must already be topologically ordered. No validation happens here;
  /// use build_graph() or validate() for checked construction.
  explicit ModelGraph(std::vector<Node> nodes, TapGroups taps = {});

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  const Node& node(std::string_view id) const { return nodes_[index_of(id)]; }

  /// Parameter access for optimizers and surgery. Shape fields must not be
  /// changed through these references.
  ConvNode& conv(std::size_t i);
  const ConvNode& conv(std::size_t i) const;
  BatchNormNode& batch_norm(std::size_t i);
  const BatchNormNode& batch_norm(std::size_t i) const;
  const ConvNode* conv_params(std::size_t i) const;  // Conv or Head, else nullptr

  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;  // throws StructuralError
  const std::vector<std::size_t>& producers(std::size_t i) const { return producers_[i]; }
  const std::vector<std::size_t>& consumers(std::size_t i) const { return consumers_[i]; }
  std::size_t input_index() const;
  int input_channels() const;
  /// Nodes without consumers.
  std::vector<std::size_t> outputs() const;
  /// Output channel count of node i derived from declared fields.
  int out_channels(std::size_t i) const;
  std::vector<std::pair<std::string, std::string>> edges() const;

  const TapGroups& tap_groups() const { return taps_; }

 private:
  std::vector<Node> nodes_;
  TapGroups taps_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<std::size_t>> producers_;
  std::vector<std::vector<std::size_t>> consumers_;
};

struct Violation {
  std::string node;
  std::string message;
};

/// Checks every structural invariant; an empty result means the graph is valid.
std::vector<Violation> validate(const ModelGraph& graph);

/// Parses a graph spec document (`nodes` + `edges`) and initializes
/// parameters: Kaiming fan-in normal for conv weights, zero bias, gamma = 1,
/// beta = 0, running statistics (0, 1). Deterministic for a given seed.
/// When the document carries a `weights` section, `blob` must hold the
/// referenced sidecar bytes and parameters are loaded instead.
ModelGraph build_graph(const nlohmann::json& spec, std::uint64_t seed,
                       const std::vector<std::byte>* blob = nullptr);

/// In-memory form of the on-disk format: JSON document plus the
/// little-endian float32 sidecar it references.
struct GraphArchive {
  nlohmann::json document;
  std::vector<std::byte> blob;
};

GraphArchive to_archive(const ModelGraph& graph, const std::string& blob_name);
ModelGraph from_archive(const GraphArchive& archive);

/// Writes `path` (JSON) and a sidecar `<stem>.bin` next to it.
void save_graph(const ModelGraph& graph, const std::filesystem::path& path);
ModelGraph load_graph(const std::filesystem::path& path);

}  // namespace slimcwd

#endif  // SLIMCWD_GRAPH_HPP
