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

#ifndef SLIMCWD_EXECUTOR_HPP
#define SLIMCWD_EXECUTOR_HPP

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "slimcwd/graph.hpp"
#include "slimcwd/tensor.hpp"

namespace slimcwd {

enum class Mode { Train, Eval };

/// Everything a forward pass leaves behind: one feature map per node plus the
/// intermediates backward() needs. In train mode batch norm uses batch
/// statistics; the graph itself is never modified (see update_running_stats).
struct ForwardState {
  Mode mode = Mode::Eval;
  std::vector<Tensor> values;                 // by node index
  std::vector<std::vector<float>> bn_mean;    // batch (train) or running (eval) mean, per BN node
  std::vector<std::vector<float>> bn_var;     // biased batch variance or running variance
  std::vector<std::vector<float>> bn_inv_std;
  std::vector<std::vector<int>> pool_argmax;  // per maxpool node

  const Tensor& value(const ModelGraph& g, std::string_view id) const { return values[g.index_of(id)]; }
};

ForwardState forward(const ModelGraph& graph, const Tensor& input, Mode mode);

/// Convenience: eval-mode forward returning the feature maps of graph outputs.
std::vector<Tensor> predict(const ModelGraph& graph, const Tensor& input);

/// Moves running estimates toward the batch statistics recorded by a
/// train-mode forward: r = (1 - momentum) r + momentum * batch, with the
/// unbiased variance estimate.
void update_running_stats(ModelGraph& graph, const ForwardState& state, double momentum = 0.1);

/// Parameter gradients of one node. For batch norm, `weight` is d/dgamma and
/// `bias` is d/dbeta.
struct ParamGrad {
  std::vector<float> weight;
  std::vector<float> bias;
};

struct Gradients {
  std::vector<ParamGrad> params;  // by node index; empty for parameterless nodes
  Tensor input;                   // d/d(graph input)
};

/// Reverse-mode sweep. `seeds` pairs node indices with dL/d(node output);
/// seeds may target any node, not only outputs, and are accumulated.
Gradients backward(const ModelGraph& graph, const ForwardState& state,
                   std::span<const std::pair<std::size_t, Tensor>> seeds);

}  // namespace slimcwd

#endif  // SLIMCWD_EXECUTOR_HPP
