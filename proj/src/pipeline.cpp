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

#include "slimcwd/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <list>
#include <set>

#include <fmt/format.h>

#include "slimcwd/error.hpp"
#include "slimcwd/plot.hpp"
#include "slimcwd/pruning.hpp"
#include "slimcwd/zoo.hpp"

namespace slimcwd::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads one JSON object, remembering the dotted path for diagnostics and
// rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }
  // Rejects keys nobody asked for, here and in every child.
  void done() const {
    for (const auto& [key, value] : doc_.items())
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    for (const auto& c : children_) c.done();
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key) || doc_[key].is_null()) return;
    try {
      out = doc_[key].get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    T v{};
    seen_.insert(key);
    if (!doc_.contains(key) || doc_[key].is_null()) return;
    get(key, v);
    out = v;
  }

  template <class E, class Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!doc_.contains(key) || doc_[key].is_null()) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      throw ConfigError(field(key), what.substr(what.find(": ") + 2));
    }
  }

  Reader* child(const char* key) {
    seen_.insert(key);
    if (!doc_.contains(key) || doc_[key].is_null()) return nullptr;
    return &children_.emplace_back(doc_[key], field(key));
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
  std::list<Reader> children_;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void require(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint / "model.json"))
    throw MissingArtifactError("required artifact missing: " + (checkpoint / "model.json").string());
}

StageResult last_metric(const train::TrainResult& r, const train::Dataset& data) {
  if (!r.history.epochs.empty()) return {r.history.epochs.back().metric_name, r.history.epochs.back().val_metric};
  const auto ev = train::evaluate(r.graph, data);
  return {ev.name, ev.value};
}

StageResult train_stage(const RunConfig& cfg, const train::Dataset& data, ModelGraph graph, train::Stage stage,
                        const fs::path& out, const train::DistillInputs* inputs = nullptr,
                        const std::optional<train::TrainConfig>& override_cfg = std::nullopt) {
  train::TrainOptions opts;
  opts.checkpoint_dir = out;
  opts.keep_step_log = false;
  const auto tc = override_cfg ? *override_cfg : train_config_for(cfg, stage);
  auto result = train::train(std::move(graph), data, tc, stage, inputs, opts);
  if (tc.epochs == 0) train::save_checkpoint(out, result.graph, result.history);
  return last_metric(result, data);
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

json run_config_to_json(const RunConfig& c) {
  json alpha_min = c.distill.alpha_min ? json(*c.distill.alpha_min) : json(nullptr);
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"task",
       {{"kind", train::task_name(c.task.kind)},
        {"image_size", c.task.image_size},
        {"num_classes", c.task.num_classes},
        {"train_samples", c.task.train_samples},
        {"val_samples", c.task.val_samples},
        {"heatmap_stride", c.task.heatmap_stride},
        {"max_objects", c.task.max_objects}}},
      {"model", {{"spec", c.model_spec.string()}, {"width", c.model_width}}},
      {"train",
       {{"learning_rate", c.learning_rate},
        {"momentum", c.momentum},
        {"weight_decay", c.weight_decay},
        {"batch_size", c.batch_size}}},
      {"stages",
       {{"baseline_epochs", c.epochs.baseline},
        {"sparse_epochs", c.epochs.sparse},
        {"finetune_epochs", c.epochs.finetune},
        {"distill_epochs", c.epochs.distill},
        {"sparse_init", c.sparse_init == SparseInit::FromBaseline ? "baseline" : "scratch"}}},
      {"sparsity",
       {{"initial_rate", c.sparsity.initial_rate},
        {"total_epochs", c.sparsity.total_epochs},
        {"direction", sparsity::direction_name(c.sparsity.direction)}}},
      {"prune", {{"ratio", c.prune.ratio}, {"floor", c.prune.floor}, {"rounding", rounding_name(c.prune.rounding)}}},
      {"distill",
       {{"preset", c.distill.preset},
        {"temperature", c.distill.temperature},
        {"alpha0", c.distill.alpha0},
        {"schedule", distill::schedule_name(c.distill.schedule)},
        {"decay_k", c.distill.decay_k},
        {"alpha_min", alpha_min}}},
      {"profile", {{"precision", profiler::precision_name(c.precision)}, {"fps_iterations", c.fps_iterations}}},
  };
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  {
    Reader r(doc, "");
    r.get("seed", c.seed);
    std::string out = c.output_dir.string();
    r.get("output_dir", out);
    c.output_dir = out;
    if (auto t = r.child("task")) {
      t->get_enum("kind", c.task.kind, train::parse_task);
      t->get("image_size", c.task.image_size);
      t->get("num_classes", c.task.num_classes);
      t->get("train_samples", c.task.train_samples);
      t->get("val_samples", c.task.val_samples);
      t->get("heatmap_stride", c.task.heatmap_stride);
      t->get("max_objects", c.task.max_objects);
    }
    if (auto m = r.child("model")) {
      std::string spec;
      m->get("spec", spec);
      c.model_spec = spec;
      m->get("width", c.model_width);
    }
    if (auto t = r.child("train")) {
      t->get("learning_rate", c.learning_rate);
      t->get("momentum", c.momentum);
      t->get("weight_decay", c.weight_decay);
      t->get("batch_size", c.batch_size);
    }
    if (auto s = r.child("stages")) {
      s->get("baseline_epochs", c.epochs.baseline);
      s->get("sparse_epochs", c.epochs.sparse);
      s->get("finetune_epochs", c.epochs.finetune);
      s->get("distill_epochs", c.epochs.distill);
      s->get_enum("sparse_init", c.sparse_init, [](const std::string& v) {
        if (v == "baseline") return SparseInit::FromBaseline;
        if (v == "scratch") return SparseInit::FromScratch;
        throw ConfigError("sparse_init", "expected 'baseline' or 'scratch', got '" + v + "'");
      });
    }
    if (auto s = r.child("sparsity")) {
      s->get("initial_rate", c.sparsity.initial_rate);
      s->get("total_epochs", c.sparsity.total_epochs);
      s->get_enum("direction", c.sparsity.direction, sparsity::parse_direction);
    }
    if (auto p = r.child("prune")) {
      p->get("ratio", c.prune.ratio);
      p->get("floor", c.prune.floor);
      p->get_enum("rounding", c.prune.rounding, parse_rounding);
    }
    if (auto d = r.child("distill")) {
      d->get("preset", c.distill.preset);
      d->get("temperature", c.distill.temperature);
      d->get("alpha0", c.distill.alpha0);
      d->get_enum("schedule", c.distill.schedule, distill::parse_schedule);
      d->get("decay_k", c.distill.decay_k);
      d->get("alpha_min", c.distill.alpha_min);
    }
    if (auto p = r.child("profile")) {
      p->get_enum("precision", c.precision, profiler::parse_precision);
      p->get("fps_iterations", c.fps_iterations);
    }
    r.done();
  }
  c.task.seed = c.seed;
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  auto check = [](bool ok, const char* field, const std::string& what) {
    if (!ok) throw ConfigError(field, what);
  };
  check(c.task.num_classes >= 2 && c.task.num_classes <= 5, "task.num_classes", "must lie in [2, 5]");
  check(c.task.image_size >= 8 && c.task.image_size % 8 == 0, "task.image_size", "must be a positive multiple of 8");
  check(c.task.heatmap_stride == 4 || !c.model_spec.empty(), "task.heatmap_stride",
        "the built-in detector predicts at stride 4");
  check(c.task.train_samples >= 1, "task.train_samples", "must be positive");
  check(c.task.val_samples >= 1, "task.val_samples", "must be positive");
  check(c.task.max_objects >= 1, "task.max_objects", "must be positive");
  check(c.model_width > 0.0, "model.width", "must be positive");
  check(c.learning_rate > 0.0, "train.learning_rate", "must be positive");
  check(c.momentum >= 0.0 && c.momentum < 1.0, "train.momentum", "must lie in [0, 1)");
  check(c.weight_decay >= 0.0, "train.weight_decay", "must be non-negative");
  check(c.batch_size >= 1, "train.batch_size", "must be positive");
  check(c.epochs.baseline >= 0, "stages.baseline_epochs", "must be non-negative");
  check(c.epochs.sparse >= 1, "stages.sparse_epochs", "must be positive");
  check(c.epochs.finetune >= 0, "stages.finetune_epochs", "must be non-negative");
  check(c.epochs.distill >= 1, "stages.distill_epochs", "must be positive");
  check(c.sparsity.initial_rate > 0.0, "sparsity.initial_rate", "must be positive");
  check(c.sparsity.total_epochs <= 0 || c.sparsity.total_epochs >= c.epochs.sparse, "sparsity.total_epochs",
        "must cover every sparse epoch");
  check(c.prune.ratio >= 0.0 && c.prune.ratio < 1.0, "prune.ratio",
        fmt::format("must lie in [0, 1), got {}", c.prune.ratio));
  check(c.prune.floor >= 1, "prune.floor", "must be >= 1");
  check(c.distill.temperature > 0.0, "distill.temperature", "must be positive");
  check(c.distill.alpha0 >= 0.0, "distill.alpha0", "must be non-negative");
  check(c.distill.preset == "C1" || c.distill.preset == "C2" || c.distill.preset == "C3", "distill.preset",
        "expected C1, C2 or C3");
  check(c.fps_iterations >= 0, "profile.fps_iterations", "must be non-negative");
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "override must look like key.path=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError("config", "file not found: " + path.string());
    doc = json::parse(read_text(path), nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config", "not valid JSON: " + path.string());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw Error("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

train::Dataset dataset_for(const RunConfig& cfg) {
  auto spec = cfg.task;
  spec.seed = cfg.seed;
  return train::make_toy_dataset(spec);
}

train::TrainConfig train_config_for(const RunConfig& cfg, train::Stage stage) {
  train::TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.momentum = cfg.momentum;
  tc.weight_decay = cfg.weight_decay;
  tc.batch_size = cfg.batch_size;
  tc.image_size = cfg.task.image_size;
  // Fine-tune and distill share a batch order so their comparison is paired.
  const auto stream = stage == train::Stage::Distill ? train::Stage::Finetune : stage;
  tc.seed = cfg.seed * 16 + static_cast<std::uint64_t>(stream);
  switch (stage) {
    case train::Stage::Baseline: tc.epochs = cfg.epochs.baseline; break;
    case train::Stage::Sparse:
      tc.epochs = cfg.epochs.sparse;
      tc.sparsity = cfg.sparsity;
      if (tc.sparsity->total_epochs <= 0) tc.sparsity->total_epochs = cfg.epochs.sparse;
      break;
    case train::Stage::Finetune: tc.epochs = cfg.epochs.finetune; break;
    case train::Stage::Distill: tc.epochs = cfg.epochs.distill; break;
  }
  return tc;
}

ModelGraph initial_graph(const RunConfig& cfg) {
  if (cfg.model_spec.empty())
    return build_graph(zoo::toy_detector_spec(cfg.task.num_classes, cfg.model_width), cfg.seed);
  if (!fs::exists(cfg.model_spec)) throw MissingArtifactError("model spec not found: " + cfg.model_spec.string());
  const json doc = json::parse(read_text(cfg.model_spec), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("model.spec", "not valid JSON: " + cfg.model_spec.string());
  return build_graph(doc, cfg.seed);
}

StageResult run_baseline(const RunConfig& cfg, const train::Dataset& data) {
  return train_stage(cfg, data, initial_graph(cfg), train::Stage::Baseline, Layout{cfg.output_dir}.baseline());
}

StageResult run_sparse(const RunConfig& cfg, const train::Dataset& data) {
  const Layout L{cfg.output_dir};
  ModelGraph start = initial_graph(cfg);
  if (cfg.sparse_init == SparseInit::FromBaseline) {
    require(L.baseline());
    start = train::load_checkpoint(L.baseline()).graph;
  }
  return train_stage(cfg, data, std::move(start), train::Stage::Sparse, L.sparse());
}

PruningPlan run_prune(const RunConfig& cfg) {
  const Layout L{cfg.output_dir};
  require(L.sparse());
  const ModelGraph sparse = train::load_checkpoint(L.sparse()).graph;
  PruningPlan plan =
      pruning::make_plan(sparse, pruning::gammas_of(sparse), cfg.prune.ratio, cfg.prune.floor, cfg.prune.rounding);
  auto result = pruning::prune(sparse, plan);
  plan.index_maps = result.index_maps;
  fs::create_directories(L.pruned());
  save_graph(result.graph, L.pruned() / "model.json");
  save_plan(plan, L.plan());
  return plan;
}

StageResult run_finetune(const RunConfig& cfg, const train::Dataset& data) {
  const Layout L{cfg.output_dir};
  require(L.pruned());
  return train_stage(cfg, data, load_graph(L.pruned() / "model.json"), train::Stage::Finetune, L.finetune());
}

StageResult run_distill(const RunConfig& cfg, const train::Dataset& data, const std::optional<fs::path>& out) {
  const Layout L{cfg.output_dir};
  require(L.pruned());
  require(L.sparse());
  if (!fs::exists(L.plan())) throw MissingArtifactError("required artifact missing: " + L.plan().string());
  ModelGraph student = load_graph(L.pruned() / "model.json");
  const ModelGraph teacher = train::load_checkpoint(L.sparse()).graph;
  const PruningPlan plan = load_plan(L.plan());

  auto tc = train_config_for(cfg, train::Stage::Distill);
  auto dc = distill::preset(cfg.distill.preset, student.tap_groups());
  dc.temperature = cfg.distill.temperature;
  dc.alpha0 = cfg.distill.alpha0;
  dc.schedule = cfg.distill.schedule;
  dc.decay_k = cfg.distill.decay_k;
  dc.alpha_min = cfg.distill.alpha_min;
  tc.distill = dc;

  train::DistillInputs inputs;
  inputs.teacher = &teacher;
  for (const auto& tap : dc.taps) {
    auto it = plan.index_maps.find(tap.student);
    if (it != plan.index_maps.end()) inputs.index_maps[tap.student] = it->second;
  }
  return train_stage(cfg, data, std::move(student), train::Stage::Distill, out.value_or(L.distill()), &inputs, tc);
}

ProfileResult run_profile(const RunConfig& cfg) {
  const Layout L{cfg.output_dir};
  require(L.baseline());
  fs::path ours_dir = L.pruned();
  std::string ours_name = "Pruned";
  if (fs::exists(L.distill() / "model.json")) {
    ours_dir = L.distill();
    ours_name = "Distilled";
  } else if (fs::exists(L.finetune() / "model.json")) {
    ours_dir = L.finetune();
    ours_name = "Fine-tuned";
  }
  require(ours_dir);
  const ModelGraph base = load_graph(L.baseline() / "model.json");
  const ModelGraph ours = load_graph(ours_dir / "model.json");
  const int S = cfg.task.image_size;
  auto fps = [&](const ModelGraph& g) -> std::optional<double> {
    if (cfg.fps_iterations <= 0) return std::nullopt;
    return profiler::benchmark_fps(g, S, S, 2, cfg.fps_iterations);
  };
  ProfileResult r;
  r.base = profiler::profile(base, S, S, cfg.precision, fps(base));
  r.ours = profiler::reduction_report(r.base, profiler::profile(ours, S, S, cfg.precision, fps(ours)));
  r.table = profiler::render_table(r.base, r.ours, "Baseline", ours_name);
  profiler::save_report(r.base, L.reports() / "baseline.json");
  profiler::save_report(r.ours, L.reports() / "compressed.json");
  plot::write_file(L.reports() / "complexity.txt", r.table);

  // Validation metric against cumulative epoch. Fine-tune and distill both
  // start from the pruned model, so they share an origin.
  std::vector<plot::Series> series;
  double offset = 0.0;
  for (const auto& [name, dir] : {std::pair{"baseline", L.baseline()}, {"sparse", L.sparse()},
                                  {"finetune", L.finetune()}, {"distill", L.distill()}}) {
    if (!fs::exists(dir / "history.json")) continue;
    const auto h = train::load_checkpoint(dir).history;
    plot::Series s{name, {}, {}};
    for (const auto& e : h.epochs) {
      s.x.push_back(offset + e.epoch + 1);
      s.y.push_back(e.val_metric);
    }
    if (dir != L.finetune() && dir != L.distill()) offset += static_cast<double>(h.epochs.size());
    if (!s.x.empty()) series.push_back(std::move(s));
  }
  if (!series.empty())
    plot::write_file(L.plots() / "metric_vs_epoch.svg",
                     plot::line_chart_svg("Validation metric per epoch", "cumulative epoch", "heatmap AP", series));
  return r;
}

SweepParameter parse_sweep_parameter(const std::string& s) {
  if (s == "temperature") return SweepParameter::Temperature;
  if (s == "alpha") return SweepParameter::Alpha;
  throw ConfigError("parameter", "expected 'temperature' or 'alpha', got '" + s + "'");
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg, const train::Dataset& data, SweepParameter parameter,
                                const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("values", "sweep needs at least one value");
  const bool temp = parameter == SweepParameter::Temperature;
  const std::string pname = temp ? "temperature" : "alpha";
  const Layout L{cfg.output_dir};
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    RunConfig c = cfg;
    (temp ? c.distill.temperature : c.distill.alpha0) = values[i];
    validate(c);
    const auto r = run_distill(c, data, L.root / "sweep" / fmt::format("{}_{}", pname, i));
    rows.push_back({values[i], r.metric});
  }
  std::string table = fmt::format("{:<14}{:>14}\n", pname, "heatmap_ap");
  json doc = json::array();
  plot::Series s{"distill", {}, {}};
  for (const auto& row : rows) {
    table += fmt::format("{:<14g}{:>14.6f}\n", row.value, row.metric);
    doc.push_back({{pname, row.value}, {"metric", row.metric}});
    s.x.push_back(row.value);
    s.y.push_back(row.metric);
  }
  plot::write_file(L.reports() / ("sweep_" + pname + ".txt"), table);
  plot::write_file(L.reports() / ("sweep_" + pname + ".json"), doc.dump(1) + "\n");
  plot::write_file(L.plots() / ("sweep_" + pname + ".svg"),
                   plot::line_chart_svg("Distillation sweep", temp ? "temperature" : "alpha", "heatmap AP", {s}));
  return rows;
}

PipelineSummary run_pipeline(const RunConfig& cfg) {
  const auto data = dataset_for(cfg);
  PipelineSummary s;
  s.baseline = run_baseline(cfg, data);
  s.sparse = run_sparse(cfg, data);
  run_prune(cfg);
  s.finetune = run_finetune(cfg, data);
  s.distill = run_distill(cfg, data);
  const auto prof = run_profile(cfg);
  s.base_params = prof.base.params;
  s.pruned_params = prof.ours.params;
  s.param_reduction = prof.ours.reductions.at("params");
  return s;
}

}  // namespace slimcwd::pipeline
