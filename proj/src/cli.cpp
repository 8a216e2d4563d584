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

#include "slimcwd/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "slimcwd/error.hpp"
#include "slimcwd/pipeline.hpp"
#include "slimcwd/plot.hpp"
#include "slimcwd/profiler.hpp"
#include "slimcwd/zoo.hpp"

namespace slimcwd::cli {

namespace fs = std::filesystem;
using pipeline::RunConfig;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "run config JSON");
  cmd->add_option("--set", c.overrides, "override a config field, e.g. --set prune.ratio=0.4")->take_all();
  cmd->add_option("-o,--out", c.out, "output directory (overrides config and SLIMCWD_OUTPUT_ROOT)");
}

RunConfig resolve(const Common& c, std::vector<std::string> extra = {}) {
  std::vector<std::string> all = c.overrides;
  for (auto& e : extra) all.push_back(std::move(e));
  RunConfig cfg = pipeline::load_run_config(c.config, all);
  if (!c.out.empty()) {
    cfg.output_dir = c.out;
  } else if (const char* root = std::getenv("SLIMCWD_OUTPUT_ROOT"); root && *root && cfg.output_dir.is_relative()) {
    cfg.output_dir = fs::path(root) / cfg.output_dir;
  }
  return cfg;
}

void print_stage(std::ostream& out, const char* stage, const pipeline::StageResult& r, const fs::path& dir) {
  out << fmt::format("{}: {} = {:.4f} -> {}\n", stage, r.metric_name, r.metric, dir.string());
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("values", "not a number: '" + item + "'");
    }
  }
  return v;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"slimcwd: sparsity training, structured pruning and channel-wise distillation"};
  app.require_subcommand(1);

  Common common;
  auto* baseline = app.add_subcommand("train-baseline", "train the dense baseline");
  auto* sparse = app.add_subcommand("sparse-train", "L1 sparsity training on BN scaling factors");
  auto* prune = app.add_subcommand("prune", "prune the sparse checkpoint and write a plan");
  auto* finetune = app.add_subcommand("finetune", "fine-tune the pruned model");
  auto* distill = app.add_subcommand("distill", "fine-tune the pruned model with channel-wise distillation");
  auto* profile = app.add_subcommand("profile", "complexity report for baseline vs compressed model");
  auto* report = app.add_subcommand("report", "compare two complexity report JSON files");
  auto* sweep = app.add_subcommand("sweep", "distillation sweep over temperature or alpha");
  auto* all = app.add_subcommand("pipeline", "run every stage in order");
  auto* spec = app.add_subcommand("export-spec", "write the built-in detector's graph spec");
  auto* show = app.add_subcommand("print-config", "print the resolved run config");
  for (auto* cmd : {baseline, sparse, prune, finetune, distill, profile, sweep, all, show}) add_common(cmd, common);

  std::optional<double> ratio;
  std::optional<int> floor;
  std::string rounding;
  prune->add_option("--ratio", ratio, "fraction of channels removed per layer");
  prune->add_option("--floor", floor, "minimum channels kept per layer");
  prune->add_option("--rounding", rounding, "none | multiple_of_8");

  std::string preset;
  std::optional<double> temperature, alpha;
  distill->add_option("--preset", preset, "tap preset: C1 | C2 | C3");
  distill->add_option("--temperature", temperature, "softmax temperature");
  distill->add_option("--alpha", alpha, "distillation weight");

  std::string base_path, ours_path, report_json;
  report->add_option("--base", base_path, "baseline report JSON")->required();
  report->add_option("--ours", ours_path, "compressed report JSON")->required();
  report->add_option("--json", report_json, "write the reduction report here");

  std::string parameter, values;
  sweep->add_option("--parameter", parameter, "temperature | alpha")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();

  std::string spec_out;
  int spec_classes = 3;
  double spec_width = 1.0;
  spec->add_option("output", spec_out, "destination JSON (stdout when omitted)");
  spec->add_option("--classes", spec_classes, "output classes");
  spec->add_option("--width", spec_width, "channel width multiplier");

  std::vector<std::string> argv_store{"slimcwd"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (auto& a : argv_store) argv.push_back(a.c_str());

  try {
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        out << app.help();
        return kExitOk;
      }
      err << "error: " << e.what() << "\n";
      return kExitConfig;
    }

    if (*spec) {
      const std::string text = zoo::toy_detector_spec(spec_classes, spec_width).dump(1) + "\n";
      if (spec_out.empty()) {
        out << text;
      } else {
        plot::write_file(spec_out, text);
      }
      return kExitOk;
    }

    if (*report) {
      for (const auto& p : {base_path, ours_path})
        if (!fs::exists(p)) throw MissingArtifactError("report not found: " + p);
      const auto base = profiler::load_report(base_path);
      const auto ours = profiler::reduction_report(base, profiler::load_report(ours_path));
      out << profiler::render_table(base, ours, fs::path(base_path).stem().string(),
                                    fs::path(ours_path).stem().string());
      if (!report_json.empty()) profiler::save_report(ours, report_json);
      return kExitOk;
    }

    std::vector<std::string> extra;
    if (ratio) extra.push_back(fmt::format("prune.ratio={}", *ratio));
    if (floor) extra.push_back(fmt::format("prune.floor={}", *floor));
    if (!rounding.empty()) extra.push_back("prune.rounding=\"" + rounding + "\"");
    if (!preset.empty()) extra.push_back("distill.preset=\"" + preset + "\"");
    if (temperature) extra.push_back(fmt::format("distill.temperature={}", *temperature));
    if (alpha) extra.push_back(fmt::format("distill.alpha0={}", *alpha));
    const RunConfig cfg = resolve(common, extra);

    if (*show) {
      out << pipeline::run_config_to_json(cfg).dump(2) << "\n";
      return kExitOk;
    }

    std::optional<pipeline::SweepParameter> sweep_param;
    std::vector<double> sweep_values;
    if (*sweep) {
      sweep_param = pipeline::parse_sweep_parameter(parameter);
      sweep_values = parse_values(values);
      if (sweep_values.empty()) throw ConfigError("values", "sweep needs at least one value");
    }

    pipeline::OutputLock lock(cfg.output_dir);
    const pipeline::Layout L{cfg.output_dir};
    if (*prune) {
      const auto plan = pipeline::run_prune(cfg);
      out << fmt::format("prune: ratio {} over {} layers -> {}\n", plan.ratio, plan.per_layer.size(),
                         L.plan().string());
      return kExitOk;
    }
    if (*profile) {
      out << pipeline::run_profile(cfg).table;
      return kExitOk;
    }
    if (*all) {
      const auto s = pipeline::run_pipeline(cfg);
      print_stage(out, "baseline", s.baseline, L.baseline());
      print_stage(out, "sparse", s.sparse, L.sparse());
      print_stage(out, "finetune", s.finetune, L.finetune());
      print_stage(out, "distill", s.distill, L.distill());
      out << fmt::format("params: {} -> {} ({:.2f}% reduction)\n", s.base_params, s.pruned_params,
                         s.param_reduction);
      return kExitOk;
    }

    const auto data = pipeline::dataset_for(cfg);
    if (*baseline) print_stage(out, "baseline", pipeline::run_baseline(cfg, data), L.baseline());
    if (*sparse) print_stage(out, "sparse", pipeline::run_sparse(cfg, data), L.sparse());
    if (*finetune) print_stage(out, "finetune", pipeline::run_finetune(cfg, data), L.finetune());
    if (*distill) print_stage(out, "distill", pipeline::run_distill(cfg, data), L.distill());
    if (*sweep) {
      for (const auto& row : pipeline::run_sweep(cfg, data, *sweep_param, sweep_values))
        out << fmt::format("{:<10g} {:.6f}\n", row.value, row.metric);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingArtifactError& e) {
    err << "missing artifact: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace slimcwd::cli
