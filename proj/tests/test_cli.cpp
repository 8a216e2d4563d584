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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "slimcwd/cli.hpp"

namespace fs = std::filesystem;
using slimcwd::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("slimcwd_cli_" + name);
  fs::remove_all(p);
  return p;
}

// Stage subcommand on a tiny config rooted at `dir`.
Outcome stage(const std::string& cmd, const fs::path& dir, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{cmd, "-o", dir.string(), "--set", "task.train_samples=16", "task.val_samples=8",
                                "stages.baseline_epochs=1", "stages.sparse_epochs=1", "stages.finetune_epochs=1",
                                "stages.distill_epochs=1", "model.width=0.5"};
  // --set takes every following token, so extra options go first.
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return cli(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

}  // namespace

TEST_CASE("stage chain writes its artifacts") {
  const auto dir = scratch("chain");
  CHECK(stage("train-baseline", dir).code == 0);
  CHECK(stage("sparse-train", dir).code == 0);
  const auto p = stage("prune", dir, {"--ratio", "0.5"});
  CHECK(p.code == 0);
  const auto plan = nlohmann::json::parse(slurp(dir / "pruned" / "plan.json"));
  CHECK(plan.contains("per_layer"));
  CHECK(stage("finetune", dir).code == 0);
  CHECK(stage("distill", dir, {"--preset", "C2"}).code == 0);
  const auto prof = stage("profile", dir);
  CHECK(prof.code == 0);
  CHECK(prof.out.find("#parameters") != std::string::npos);
  for (const char* f : {"baseline/model.bin", "sparse/history.json", "finetune/model.json", "distill/model.bin",
                        "reports/baseline.json", "reports/compressed.json", "plots/metric_vs_epoch.svg"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  CHECK_FALSE(fs::exists(dir / ".lock"));
}

TEST_CASE("bad config values exit 2 naming the field") {
  const auto dir = scratch("badcfg");
  const auto r = stage("prune", dir, {"--ratio", "1.5"});
  CHECK(r.code == 2);
  CHECK(r.err.find("prune.ratio") != std::string::npos);
  const auto unknown = cli({"print-config", "--set", "train.lerning_rate=0.1"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("lerning_rate") != std::string::npos);
  CHECK(cli({"print-config", "--set", "distill.schedule=sideways"}).code == 2);
  CHECK(cli({"no-such-command"}).code == 2);
  CHECK(cli({"print-config", "-c", (dir / "absent.json").string()}).code == 2);
}

TEST_CASE("missing upstream artifact exits 3") {
  const auto dir = scratch("missing");
  const auto r = stage("prune", dir);
  CHECK(r.code == 3);
  CHECK_FALSE(r.err.empty());
  CHECK(stage("distill", dir).code == 3);
  CHECK(stage("profile", dir).code == 3);
}

TEST_CASE("report with identical inputs shows zero reductions") {
  const auto dir = scratch("report");
  fs::create_directories(dir);
  const nlohmann::json rep{{"params", 1000},          {"macs", 50000},     {"flops", 100000},
                           {"size_bytes", 2000},      {"fps", 10.0},       {"precision", "float16"},
                           {"input_shape", {32, 32}}, {"reductions", nlohmann::json::object()}};
  std::ofstream(dir / "a.json") << rep.dump();
  const auto r = cli({"report", "--base", (dir / "a.json").string(), "--ours", (dir / "a.json").string(), "--json",
                      (dir / "red.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("0.00%") != std::string::npos);
  const auto red = nlohmann::json::parse(slurp(dir / "red.json"));
  for (const auto& [k, v] : red.at("reductions").items()) CHECK_MESSAGE(v.get<double>() == 0.0, k);
  CHECK(red.at("reductions").size() >= 4);
  CHECK(cli({"report", "--base", (dir / "nope.json").string(), "--ours", (dir / "a.json").string()}).code == 3);
}

TEST_CASE("sweep: one row per value and an empty list is rejected") {
  const auto dir = scratch("sweep");
  REQUIRE(stage("train-baseline", dir).code == 0);
  REQUIRE(stage("sparse-train", dir).code == 0);
  REQUIRE(stage("prune", dir).code == 0);
  CHECK(stage("sweep", dir, {"--parameter", "temperature", "--values", ""}).code == 2);
  const auto r = stage("sweep", dir, {"--parameter", "temperature", "--values", "1,2,3,4,5,6,7,8,9,10"});
  REQUIRE(r.code == 0);
  const auto rows = nlohmann::json::parse(slurp(dir / "reports" / "sweep_temperature.json"));
  REQUIRE(rows.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(rows[i].at("temperature").get<double>() == i + 1);
  CHECK(fs::exists(dir / "plots" / "sweep_temperature.svg"));
  CHECK(stage("sweep", dir, {"--parameter", "gamma", "--values", "1"}).code == 2);
}

TEST_CASE("pipeline reruns are byte-identical and the lock guards the directory") {
  const auto a = scratch("idem_a"), b = scratch("idem_b");
  REQUIRE(stage("pipeline", a).code == 0);
  const auto first = tree(a);
  REQUIRE(stage("pipeline", a).code == 0);
  CHECK(tree(a) == first);
  REQUIRE(stage("pipeline", b).code == 0);
  CHECK(tree(b) == first);

  std::ofstream(a / ".lock") << "held";
  const auto locked = stage("train-baseline", a);
  CHECK(locked.code == 1);
  CHECK(locked.err.find("lock") != std::string::npos);
  fs::remove(a / ".lock");
}

TEST_CASE("output root comes from the environment for relative dirs") {
  const auto root = scratch("envroot");
  ::setenv("SLIMCWD_OUTPUT_ROOT", root.c_str(), 1);
  const auto r = cli({"print-config", "--set", "output_dir=rel"});
  ::unsetenv("SLIMCWD_OUTPUT_ROOT");
  REQUIRE(r.code == 0);
  const auto cfg = nlohmann::json::parse(r.out);
  CHECK(fs::path(cfg.at("output_dir").get<std::string>()) == root / "rel");
}

TEST_CASE("export-spec writes a loadable graph spec") {
  const auto dir = scratch("spec");
  REQUIRE(cli({"export-spec", (dir / "toy.json").string(), "--classes", "4"}).code == 0);
  const auto spec = nlohmann::json::parse(slurp(dir / "toy.json"));
  CHECK(spec.at("nodes").size() > 10);
}
