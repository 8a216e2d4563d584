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

#ifndef SLIMCWD_PROFILER_HPP
#define SLIMCWD_PROFILER_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "slimcwd/graph.hpp"

namespace slimcwd::profiler {

enum class Precision { Float32, Float16 };

int bytes_per_element(Precision p);
const char* precision_name(Precision p);
Precision parse_precision(const std::string& s);

/// Complexity of one model at one input resolution (batch 1). MB figures in
/// rendered tables use 10^6 bytes.
struct ComplexityReport {
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t flops = 0;
  std::int64_t size_bytes = 0;
  Precision precision = Precision::Float16;
  int input_height = 0;
  int input_width = 0;
  std::optional<double> fps;
  /// Metric name -> 100 * (base - ours) / base. Empty unless produced by
  /// reduction_report().
  std::map<std::string, double> reductions;
};

/// Conv: Cin * Cout * k^2 (+ Cout with bias). BN: 2C (gamma, beta). Everything else: 0.
std::int64_t count_params(const ModelGraph& graph);

/// Sum over convs of Cin * Cout * k^2 * H_out * W_out. Element-wise nodes
/// contribute nothing.
std::int64_t count_macs(const ModelGraph& graph, int height, int width);

/// 2 * count_macs.
std::int64_t count_flops(const ModelGraph& graph, int height, int width);

std::int64_t model_size(const ModelGraph& graph, Precision precision);

/// Iterations per second of eval-mode forwards on a fixed random input,
/// after discarding `warmup` runs. Not thread-safe: timing assumes an
/// otherwise idle process.
double benchmark_fps(const ModelGraph& graph, int height, int width, int warmup, int iters);

ComplexityReport profile(const ModelGraph& graph, int height, int width, Precision precision,
                         std::optional<double> fps = std::nullopt);

/// `ours` with reductions filled in against `base`.
ComplexityReport reduction_report(const ComplexityReport& base, const ComplexityReport& ours);

nlohmann::json report_to_json(const ComplexityReport& r);
ComplexityReport report_from_json(const nlohmann::json& doc);
void save_report(const ComplexityReport& r, const std::filesystem::path& path);
ComplexityReport load_report(const std::filesystem::path& path);

/// Text table with one row per model and a reduction row, e.g.
///   Model   #parameters  MAC(G)  FLOPs(G)  Model size(MB)  FPS
std::string render_table(const ComplexityReport& base, const ComplexityReport& ours,
                         const std::string& base_name = "Base", const std::string& ours_name = "Ours");

}  // namespace slimcwd::profiler

#endif  // SLIMCWD_PROFILER_HPP
