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

#ifndef SLIMCWD_PIPELINE_HPP
#define SLIMCWD_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slimcwd/dataset.hpp"
#include "slimcwd/distillation.hpp"
#include "slimcwd/plan.hpp"
#include "slimcwd/profiler.hpp"
#include "slimcwd/sparsity.hpp"
#include "slimcwd/trainer.hpp"

namespace slimcwd::pipeline {

enum class SparseInit { FromBaseline, FromScratch };

struct StageEpochs {
  int baseline = 30;
  int sparse = 30;
  int finetune = 30;
  int distill = 30;
};

struct PruneSettings {
  double ratio = 0.5;
  int floor = 2;
  Rounding rounding = Rounding::None;
};

struct DistillSettings {
  std::string preset = "C1";
  double temperature = 6.0;
  double alpha0 = 0.5;
  distill::AlphaSchedule schedule = distill::AlphaSchedule::Constant;
  double decay_k = 5.0;
  std::optional<double> alpha_min;
};

/// Everything one pipeline run needs. Loaded from a single JSON document;
/// the defaults are the desk preset.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/desk";
  train::ToyTaskSpec task;
  /// Graph-spec JSON; empty means the built-in toy detector.
  std::filesystem::path model_spec;
  double model_width = 1.0;
  double learning_rate = 0.01;
  double momentum = 0.937;
  double weight_decay = 0.0005;
  int batch_size = 8;
  StageEpochs epochs;
  SparseInit sparse_init = SparseInit::FromBaseline;
  sparsity::ScheduleConfig sparsity;  // total_epochs <= 0 means "= sparse epochs"
  PruneSettings prune;
  DistillSettings distill;
  profiler::Precision precision = profiler::Precision::Float16;
  int fps_iterations = 0;  // 0 skips FPS measurement
};

RunConfig default_run_config();
nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys and invalid values raise
/// ConfigError naming the dotted field path.
RunConfig run_config_from_json(const nlohmann::json& doc);
/// Applies "a.b.c=value" to a config document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// Range checks that parsing alone cannot express.
void validate(const RunConfig& cfg);

/// Exclusive claim on an output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Artifact layout under the output directory.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path baseline() const { return root / "baseline"; }
  std::filesystem::path sparse() const { return root / "sparse"; }
  std::filesystem::path pruned() const { return root / "pruned"; }
  std::filesystem::path plan() const { return root / "pruned" / "plan.json"; }
  std::filesystem::path finetune() const { return root / "finetune"; }
  std::filesystem::path distill() const { return root / "distill"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path plots() const { return root / "plots"; }
};

train::Dataset dataset_for(const RunConfig& cfg);
train::TrainConfig train_config_for(const RunConfig& cfg, train::Stage stage);
ModelGraph initial_graph(const RunConfig& cfg);

struct StageResult {
  std::string metric_name;
  double metric = 0.0;
};

StageResult run_baseline(const RunConfig& cfg, const train::Dataset& data);
StageResult run_sparse(const RunConfig& cfg, const train::Dataset& data);
/// Needs sparse/. Writes pruned/model.json and pruned/plan.json.
PruningPlan run_prune(const RunConfig& cfg);
StageResult run_finetune(const RunConfig& cfg, const train::Dataset& data);
/// Student = pruned/, teacher = sparse/, output in `out` (default distill/).
StageResult run_distill(const RunConfig& cfg, const train::Dataset& data,
                        const std::optional<std::filesystem::path>& out = std::nullopt);

struct ProfileResult {
  profiler::ComplexityReport base;
  profiler::ComplexityReport ours;
  std::string table;
};
/// Profiles baseline/ against the best available compressed model
/// (distill/, else finetune/, else pruned/) and writes reports/.
ProfileResult run_profile(const RunConfig& cfg);

enum class SweepParameter { Temperature, Alpha };
SweepParameter parse_sweep_parameter(const std::string& s);

struct SweepRow {
  double value = 0.0;
  double metric = 0.0;
};
/// One distill run per value into sweep/<parameter>_<i>/, then a table and
/// an SVG chart under plots/.
std::vector<SweepRow> run_sweep(const RunConfig& cfg, const train::Dataset& data, SweepParameter parameter,
                                const std::vector<double>& values);

struct PipelineSummary {
  StageResult baseline;
  StageResult sparse;
  StageResult finetune;
  StageResult distill;
  std::int64_t base_params = 0;
  std::int64_t pruned_params = 0;
  double param_reduction = 0.0;  // percent
};
PipelineSummary run_pipeline(const RunConfig& cfg);

}  // namespace slimcwd::pipeline

#endif  // SLIMCWD_PIPELINE_HPP
