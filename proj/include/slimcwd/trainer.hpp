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

#ifndef SLIMCWD_TRAINER_HPP
#define SLIMCWD_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slimcwd/dataset.hpp"
#include "slimcwd/distillation.hpp"
#include "slimcwd/graph.hpp"
#include "slimcwd/sparsity.hpp"

namespace slimcwd::train {

enum class Stage { Baseline, Sparse, Finetune, Distill };

const char* stage_name(Stage s);

/// SGD with momentum. Weight decay applies to conv kernels only, never to
/// biases or batch-norm parameters.
struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.937;
  double weight_decay = 0.0005;
  int batch_size = 8;
  int epochs = 100;
  int image_size = 32;
  std::uint64_t seed = 0;
  std::optional<sparsity::ScheduleConfig> sparsity;
  std::optional<distill::DistillationConfig> distill;
};

/// Teacher and alignment data for the distill stage.
struct DistillInputs {
  const ModelGraph* teacher = nullptr;
  /// Student node id -> original (teacher) channel of each student channel.
  std::map<std::string, std::vector<int>> index_maps;
};

struct StepLog {
  int epoch = 0;
  int step = 0;
  double task = 0.0;
  double sparsity_penalty = 0.0;
  double cwd = 0.0;  // mean over taps
  double alpha = 0.0;
  double total = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double task_loss = 0.0;
  double sparsity_penalty = 0.0;
  double sparsity_rate = 0.0;
  double cwd_loss = 0.0;
  double alpha = 0.0;
  double total_loss = 0.0;
  std::string metric_name;
  double val_metric = 0.0;
};

struct History {
  std::string stage;
  std::vector<EpochMetrics> epochs;
  std::vector<StepLog> steps;
};

nlohmann::json history_to_json(const History& h);
History history_from_json(const nlohmann::json& doc);

struct TrainOptions {
  /// When set, model.json/model.bin/history.json are rewritten after every epoch.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Drops task-loss gradients (the loss is still logged). Test hook for
  /// isolating the sparsity penalty.
  bool freeze_task_gradients = false;
  bool keep_step_log = true;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  ModelGraph graph;
  History history;
};

TrainResult train(ModelGraph graph, const Dataset& data, const TrainConfig& cfg, Stage stage,
                  const DistillInputs* distill_inputs = nullptr, const TrainOptions& options = {});

struct EvalMetrics {
  std::string name;  // "accuracy" or "heatmap_ap"
  double value = 0.0;
  double task_loss = 0.0;
};

/// Eval-mode metrics on the validation split.
EvalMetrics evaluate(const ModelGraph& graph, const Dataset& data);

/// Top-1 accuracy of [N, K] scores (any trailing spatial dims are averaged).
double top1_accuracy(const Tensor& scores, const std::vector<int>& labels);

/// Mean over classes of the average precision of cell scores against
/// ground-truth peak cells (target == 1), sweeping every distinct threshold.
double heatmap_ap(const Tensor& scores, const Tensor& targets);

struct Checkpoint {
  ModelGraph graph;
  History history;
};

void save_checkpoint(const std::filesystem::path& dir, const ModelGraph& graph, const History& history);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace slimcwd::train

#endif  // SLIMCWD_TRAINER_HPP
