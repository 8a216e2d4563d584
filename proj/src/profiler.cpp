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

#include "slimcwd/profiler.hpp"

#include <chrono>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "slimcwd/error.hpp"
#include "slimcwd/executor.hpp"

namespace slimcwd::profiler {

using nlohmann::json;

int bytes_per_element(Precision p) { return p == Precision::Float32 ? 4 : 2; }
const char* precision_name(Precision p) { return p == Precision::Float32 ? "float32" : "float16"; }

Precision parse_precision(const std::string& s) {
  if (s == "float32") return Precision::Float32;
  if (s == "float16") return Precision::Float16;
  throw ConfigError("precision", "expected 'float32' or 'float16', got '" + s + "'");
}

std::int64_t count_params(const ModelGraph& graph) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (const auto* c = graph.conv_params(i)) {
      total += static_cast<std::int64_t>(c->in_channels) * c->out_channels * c->kernel * c->kernel;
      if (c->has_bias) total += c->out_channels;
    } else if (const auto* b = std::get_if<BatchNormNode>(&graph.node(i).op)) {
      total += 2 * static_cast<std::int64_t>(b->channels);
    }
  }
  return total;
}

std::int64_t count_macs(const ModelGraph& graph, int height, int width) {
  if (graph.size() == 0) return 0;
  std::vector<std::pair<int, int>> hw(graph.size());
  std::int64_t total = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Node& n = graph.node(i);
    const auto& prod = graph.producers(i);
    auto& [h, w] = hw[i];
    if (std::holds_alternative<InputNode>(n.op)) {
      h = height, w = width;
    } else if (const auto* c = graph.conv_params(i)) {
      h = (hw[prod[0]].first + 2 * c->padding - c->kernel) / c->stride + 1;
      w = (hw[prod[0]].second + 2 * c->padding - c->kernel) / c->stride + 1;
      if (h < 1 || w < 1 || hw[prod[0]].first + 2 * c->padding < c->kernel)
        throw ShapeError("node '" + n.id + "': output spatial size underflows");
      total += static_cast<std::int64_t>(c->in_channels) * c->out_channels * c->kernel * c->kernel * h * w;
    } else if (const auto* m = std::get_if<MaxPoolNode>(&n.op)) {
      h = (hw[prod[0]].first + 2 * m->padding - m->kernel) / m->stride + 1;
      w = (hw[prod[0]].second + 2 * m->padding - m->kernel) / m->stride + 1;
      if (h < 1 || w < 1) throw ShapeError("node '" + n.id + "': output spatial size underflows");
    } else if (const auto* u = std::get_if<UpsampleNode>(&n.op)) {
      h = hw[prod[0]].first * u->factor, w = hw[prod[0]].second * u->factor;
    } else {
      hw[i] = hw[prod[0]];
    }
  }
  return total;
}

std::int64_t count_flops(const ModelGraph& graph, int height, int width) {
  return 2 * count_macs(graph, height, width);
}

std::int64_t model_size(const ModelGraph& graph, Precision precision) {
  return count_params(graph) * bytes_per_element(precision);
}

double benchmark_fps(const ModelGraph& graph, int height, int width, int warmup, int iters) {
  if (iters < 1) throw DomainError("benchmark needs at least one timed iteration");
  Tensor x(1, graph.input_channels(), height, width);
  std::mt19937 rng(0);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& v : x.values()) v = d(rng);
  for (int i = 0; i < warmup; ++i) (void)predict(graph, x);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) (void)predict(graph, x);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return iters / std::max(elapsed.count(), 1e-12);
}

ComplexityReport profile(const ModelGraph& graph, int height, int width, Precision precision,
                         std::optional<double> fps) {
  ComplexityReport r;
  r.params = count_params(graph);
  r.macs = count_macs(graph, height, width);
  r.flops = 2 * r.macs;
  r.size_bytes = r.params * bytes_per_element(precision);
  r.precision = precision;
  r.input_height = height;
  r.input_width = width;
  r.fps = fps;
  return r;
}

ComplexityReport reduction_report(const ComplexityReport& base, const ComplexityReport& ours) {
  if (base.input_height != ours.input_height || base.input_width != ours.input_width)
    throw DomainError("reports were measured at different input shapes");
  if (base.precision != ours.precision) throw DomainError("reports use different precisions");
  ComplexityReport r = ours;
  r.reductions.clear();
  auto reduce = [&](const char* name, double b, double o) {
    if (b == 0.0) throw DomainError(std::string("division by zero: base ") + name + " is 0");
    r.reductions[name] = 100.0 * (b - o) / b;
  };
  reduce("params", static_cast<double>(base.params), static_cast<double>(ours.params));
  reduce("macs", static_cast<double>(base.macs), static_cast<double>(ours.macs));
  reduce("flops", static_cast<double>(base.flops), static_cast<double>(ours.flops));
  reduce("size_bytes", static_cast<double>(base.size_bytes), static_cast<double>(ours.size_bytes));
  if (base.fps && ours.fps) reduce("fps", *base.fps, *ours.fps);
  return r;
}

json report_to_json(const ComplexityReport& r) {
  json j{{"params", r.params},
         {"macs", r.macs},
         {"flops", r.flops},
         {"size_bytes", r.size_bytes},
         {"precision", precision_name(r.precision)},
         {"input_shape", {r.input_height, r.input_width}},
         {"fps", nullptr},
         {"reductions", r.reductions}};
  if (r.fps) j["fps"] = *r.fps;
  return j;
}

ComplexityReport report_from_json(const json& doc) {
  ComplexityReport r;
  try {
    r.params = doc.at("params").get<std::int64_t>();
    r.macs = doc.at("macs").get<std::int64_t>();
    r.flops = doc.at("flops").get<std::int64_t>();
    r.size_bytes = doc.at("size_bytes").get<std::int64_t>();
    r.precision = parse_precision(doc.value("precision", std::string("float16")));
    if (doc.contains("input_shape")) {
      r.input_height = doc["input_shape"].at(0).get<int>();
      r.input_width = doc["input_shape"].at(1).get<int>();
    }
    if (doc.contains("fps") && !doc["fps"].is_null()) r.fps = doc["fps"].get<double>();
    if (doc.contains("reductions")) r.reductions = doc["reductions"].get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw ConfigError("report", e.what());
  }
  return r;
}

void save_report(const ComplexityReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << report_to_json(r).dump(1) << '\n';
}

ComplexityReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing report " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

std::string render_table(const ComplexityReport& base, const ComplexityReport& ours, const std::string& base_name,
                         const std::string& ours_name) {
  const auto red = reduction_report(base, ours).reductions;
  auto fps = [](const ComplexityReport& r) { return r.fps ? fmt::format("{:.1f}", *r.fps) : std::string("-"); };
  std::string out = fmt::format("{:<16}{:>14}{:>12}{:>12}{:>16}{:>10}\n", "Model", "#parameters", "MAC(G)",
                                "FLOPs(G)", "Model size(MB)", "FPS");
  auto row = [&](const std::string& name, const ComplexityReport& r) {
    out += fmt::format("{:<16}{:>14}{:>12.6f}{:>12.6f}{:>16.6f}{:>10}\n", name, r.params, r.macs / 1e9,
                       r.flops / 1e9, r.size_bytes / 1e6, fps(r));
  };
  row(base_name, base);
  row(ours_name, ours);
  out += fmt::format("{:<16}{:>13.2f}%{:>11.2f}%{:>11.2f}%{:>15.2f}%{:>10}\n", "Reduction", red.at("params"),
                     red.at("macs"), red.at("flops"), red.at("size_bytes"),
                     red.count("fps") ? fmt::format("{:.2f}%", red.at("fps")) : std::string("-"));
  return out;
}

}  // namespace slimcwd::profiler
