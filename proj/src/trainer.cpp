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

#include "slimcwd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "slimcwd/error.hpp"
#include "slimcwd/executor.hpp"

namespace slimcwd::train {

using nlohmann::json;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Baseline: return "baseline";
    case Stage::Sparse: return "sparse";
    case Stage::Finetune: return "finetune";
    case Stage::Distill: return "distill";
  }
  return "baseline";
}

namespace {

double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct TaskLoss {
  double value = 0.0;
  Tensor grad;  // w.r.t. head output
};

// Binary cross-entropy on logits against soft heatmap targets, summed over
// cells and averaged over batch and classes.
TaskLoss heatmap_loss(const Tensor& logits, const Tensor& target) {
  if (!logits.same_shape(target))
    throw ShapeError("head output [" + std::to_string(logits.channels()) + "x" + std::to_string(logits.height()) +
                     "x" + std::to_string(logits.width()) + "] does not match heatmap targets");
  TaskLoss out;
  out.grad = Tensor(logits.batch(), logits.channels(), logits.height(), logits.width());
  const double inv = 1.0 / (static_cast<double>(logits.batch()) * logits.channels());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits.data()[i], t = target.data()[i];
    sum += log1pexp(z) - t * z;
    out.grad.data()[i] = static_cast<float>((1.0 / (1.0 + std::exp(-z)) - t) * inv);
  }
  out.value = sum * inv;
  return out;
}

// Softmax cross-entropy on spatially averaged logits.
TaskLoss classification_loss(const Tensor& logits, const std::vector<int>& labels) {
  const int N = logits.batch(), K = logits.channels();
  const std::size_t plane = logits.plane();
  TaskLoss out;
  out.grad = Tensor(N, K, logits.height(), logits.width());
  double sum = 0.0;
  std::vector<double> z(K);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const float* p = logits.plane_ptr(n, k);
      z[k] = std::accumulate(p, p + plane, 0.0) / plane;
    }
    const double peak = *std::max_element(z.begin(), z.end());
    double zs = 0.0;
    for (double v : z) zs += std::exp(v - peak);
    const double log_z = peak + std::log(zs);
    sum += log_z - z[labels[n]];
    for (int k = 0; k < K; ++k) {
      const double g = (std::exp(z[k] - log_z) - (k == labels[n] ? 1.0 : 0.0)) / N / plane;
      std::fill(out.grad.plane_ptr(n, k), out.grad.plane_ptr(n, k) + plane, static_cast<float>(g));
    }
  }
  out.value = sum / N;
  return out;
}

std::size_t single_output(const ModelGraph& g) {
  const auto outs = g.outputs();
  if (outs.size() != 1) throw StructuralError("training expects a graph with exactly one output");
  return outs.front();
}

TaskLoss task_loss(const Dataset& data, const Split& split, const std::vector<int>& idx, const Tensor& logits) {
  if (data.spec.kind == TaskKind::DenseHeatmapDetection) return heatmap_loss(logits, data.heatmaps(split, idx));
  if (logits.channels() != data.spec.num_classes) throw ShapeError("head width differs from num_classes");
  std::vector<int> labels;
  for (int i : idx) labels.push_back(split.labels[i]);
  return classification_loss(logits, labels);
}

struct Velocity {
  std::vector<float> weight;
  std::vector<float> bias;
};

// One SGD-momentum update: v = mu v + g; p -= lr v.
void sgd(std::vector<float>& param, const std::vector<float>& grad, std::vector<float>& vel, double lr, double mu,
         double decay, const std::vector<double>* extra = nullptr) {
  if (vel.size() != param.size()) vel.assign(param.size(), 0.0f);
  for (std::size_t k = 0; k < param.size(); ++k) {
    double g = grad.empty() ? 0.0 : grad[k];
    g += decay * param[k];
    if (extra) g += (*extra)[k];
    vel[k] = static_cast<float>(mu * vel[k] + g);
    param[k] = static_cast<float>(param[k] - lr * vel[k]);
  }
}

struct TapState {
  std::size_t teacher_node = 0;
  std::size_t student_node = 0;
  std::vector<int> kept;  // index-map alignment
  distill::ChannelProjection projection;
  std::vector<double> projection_velocity;
};

}  // namespace

TrainResult train(ModelGraph graph, const Dataset& data, const TrainConfig& cfg, Stage stage,
                  const DistillInputs* inputs, const TrainOptions& options) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");
  if (cfg.batch_size < 1) throw ConfigError("train.batch_size", "must be positive");
  if (cfg.epochs < 0) throw ConfigError("train.epochs", "must be non-negative");
  if (stage == Stage::Sparse && !cfg.sparsity) throw ConfigError("sparsity", "sparse stage needs a sparsity schedule");
  if (stage == Stage::Distill && (!cfg.distill || inputs == nullptr || inputs->teacher == nullptr))
    throw ConfigError("distill", "distill stage needs a distillation config and a teacher");

  const std::size_t out_node = single_output(graph);
  TrainResult result{std::move(graph), {}};
  ModelGraph& g = result.graph;
  result.history.stage = stage_name(stage);

  std::vector<TapState> taps;
  if (stage == Stage::Distill) {
    const auto& dc = *cfg.distill;
    if (dc.taps.empty()) throw ConfigError("distill.tap_points", "no tap points configured");
    for (std::size_t t = 0; t < dc.taps.size(); ++t) {
      TapState ts;
      auto ti = inputs->teacher->find(dc.taps[t].teacher);
      auto si = g.find(dc.taps[t].student);
      if (!ti || !si) throw ConfigError("distill.tap_points", "unknown tap node '" + dc.taps[t].student + "'");
      ts.teacher_node = *ti;
      ts.student_node = *si;
      const int tc = inputs->teacher->out_channels(*ti), sc = g.out_channels(*si);
      if (dc.alignment == distill::Alignment::IndexMap) {
        auto m = inputs->index_maps.find(dc.taps[t].student);
        if (m != inputs->index_maps.end()) {
          ts.kept = m->second;
        } else if (tc == sc) {
          ts.kept.resize(sc);
          std::iota(ts.kept.begin(), ts.kept.end(), 0);
        } else {
          throw ConfigError("distill.alignment", "no index map for tap '" + dc.taps[t].student + "'");
        }
      } else {
        ts.projection = distill::ChannelProjection(sc, tc, cfg.seed + 1000 + t);
      }
      taps.push_back(std::move(ts));
    }
  }

  std::vector<Velocity> velocity(g.size());
  const Split& split = data.train;
  std::vector<int> order(split.count);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(cfg.seed * 1000003ull + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const double rate = stage == Stage::Sparse ? sparsity::sparsity_rate(epoch, *cfg.sparsity) : 0.0;
    const double alpha = stage == Stage::Distill ? distill::alpha_at(epoch, cfg.epochs, *cfg.distill) : 0.0;

    EpochMetrics em;
    em.epoch = epoch;
    em.sparsity_rate = rate;
    em.alpha = alpha;
    int steps = 0;
    for (int start = 0; start < split.count; start += cfg.batch_size) {
      const int end = std::min(split.count, start + cfg.batch_size);
      const std::vector<int> idx(order.begin() + start, order.begin() + end);
      const Tensor x = data.images(split, idx);

      const ForwardState st = forward(g, x, Mode::Train);
      TaskLoss tl = task_loss(data, split, idx, st.values[out_node]);
      std::vector<std::pair<std::size_t, Tensor>> seeds;
      if (!options.freeze_task_gradients) seeds.emplace_back(out_node, std::move(tl.grad));

      StepLog log;
      log.epoch = epoch;
      log.step = steps;
      log.task = tl.value;
      log.alpha = alpha;

      std::vector<std::vector<double>> projection_grads(taps.size());
      if (stage == Stage::Distill) {
        const ForwardState tst = forward(*inputs->teacher, x, Mode::Eval);
        std::vector<double> per_tap;
        const double tau = cfg.distill->temperature;
        for (std::size_t t = 0; t < taps.size(); ++t) {
          auto& ts = taps[t];
          const auto tfm = distill::FeatureMap::from_tensor(tst.values[ts.teacher_node]);
          const auto sfm = distill::FeatureMap::from_tensor(st.values[ts.student_node]);
          const bool projected = cfg.distill->alignment == distill::Alignment::LearnedProjection;
          const auto pair = projected ? distill::align_projection(tfm, sfm, ts.projection)
                                      : distill::align_index_map(tfm, sfm, ts.kept);
          auto cwd = distill::cwd_loss_and_grad(pair.teacher, pair.student, tau);
          per_tap.push_back(cwd.loss);
          const double w = alpha / static_cast<double>(taps.size());
          for (auto& v : cwd.student_grad.values) v *= w;
          const auto grad = projected ? ts.projection.backward(sfm, cwd.student_grad, projection_grads[t])
                                      : std::move(cwd.student_grad);
          seeds.emplace_back(ts.student_node, grad.to_tensor());
        }
        log.cwd = std::accumulate(per_tap.begin(), per_tap.end(), 0.0) / per_tap.size();
      }

      // L1 on every BN scaling factor.
      std::vector<std::vector<double>> l1_grads(g.size());
      if (stage == Stage::Sparse) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!std::holds_alternative<BatchNormNode>(g.node(i).op)) continue;
          const auto& gamma = g.batch_norm(i).gamma;
          log.sparsity_penalty += sparsity::l1_penalty(std::span<const float>(gamma), rate);
          const std::vector<double> gd(gamma.begin(), gamma.end());
          l1_grads[i] = sparsity::l1_subgradient(gd, rate);
        }
      }
      log.total = log.task + log.sparsity_penalty + log.alpha * log.cwd;
      if (!std::isfinite(log.total)) throw NumericError("training loss diverged at epoch " + std::to_string(epoch));

      const Gradients grads = backward(g, st, seeds);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& pg = grads.params[i];
        if (g.conv_params(i) != nullptr) {
          auto& c = g.conv(i);
          sgd(c.weights, pg.weight, velocity[i].weight, cfg.learning_rate, cfg.momentum, cfg.weight_decay);
          if (c.has_bias) sgd(c.bias, pg.bias, velocity[i].bias, cfg.learning_rate, cfg.momentum, 0.0);
        } else if (std::holds_alternative<BatchNormNode>(g.node(i).op)) {
          auto& b = g.batch_norm(i);
          sgd(b.gamma, pg.weight, velocity[i].weight, cfg.learning_rate, cfg.momentum, 0.0,
              l1_grads[i].empty() ? nullptr : &l1_grads[i]);
          sgd(b.beta, pg.bias, velocity[i].bias, cfg.learning_rate, cfg.momentum, 0.0);
        }
      }
      for (std::size_t t = 0; t < taps.size(); ++t) {
        if (projection_grads[t].empty()) continue;
        auto& w = taps[t].projection.weights();
        auto& v = taps[t].projection_velocity;
        v.resize(w.size(), 0.0);
        for (std::size_t k = 0; k < w.size(); ++k) {
          v[k] = cfg.momentum * v[k] + projection_grads[t][k];
          w[k] -= cfg.learning_rate * v[k];
        }
      }
      update_running_stats(g, st, 0.1);

      em.task_loss += log.task;
      em.sparsity_penalty += log.sparsity_penalty;
      em.cwd_loss += log.cwd;
      em.total_loss += log.total;
      if (options.keep_step_log) result.history.steps.push_back(log);
      ++steps;
    }
    if (steps > 0) {
      em.task_loss /= steps;
      em.sparsity_penalty /= steps;
      em.cwd_loss /= steps;
      em.total_loss /= steps;
    }
    const auto ev = evaluate(g, data);
    em.metric_name = ev.name;
    em.val_metric = ev.value;
    result.history.epochs.push_back(em);
    if (options.checkpoint_dir) save_checkpoint(*options.checkpoint_dir, g, result.history);
    if (options.on_epoch) options.on_epoch(em);
  }
  return result;
}

double top1_accuracy(const Tensor& scores, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != scores.batch()) throw ShapeError("label count differs from batch");
  if (labels.empty()) return 0.0;
  const std::size_t plane = scores.plane();
  int correct = 0;
  for (int n = 0; n < scores.batch(); ++n) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < scores.channels(); ++k) {
      const float* p = scores.plane_ptr(n, k);
      const double v = std::accumulate(p, p + plane, 0.0);
      if (v > best_v) best_v = v, best = k;
    }
    correct += best == labels[n] ? 1 : 0;
  }
  return static_cast<double>(correct) / labels.size();
}

double heatmap_ap(const Tensor& scores, const Tensor& targets) {
  if (!scores.same_shape(targets)) throw ShapeError("score and target heatmaps differ in shape");
  const std::size_t plane = scores.plane();
  double ap_sum = 0.0;
  int classes = 0;
  std::vector<std::pair<float, bool>> cells;
  for (int k = 0; k < scores.channels(); ++k) {
    cells.clear();
    int positives = 0;
    for (int n = 0; n < scores.batch(); ++n) {
      const float* s = scores.plane_ptr(n, k);
      const float* t = targets.plane_ptr(n, k);
      for (std::size_t i = 0; i < plane; ++i) {
        const bool pos = t[i] == 1.0f;
        positives += pos ? 1 : 0;
        cells.emplace_back(s[i], pos);
      }
    }
    if (positives == 0) continue;
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double ap = 0.0, prev_recall = 0.0;
    int tp = 0, seen = 0;
    for (std::size_t i = 0; i < cells.size();) {
      std::size_t j = i;
      while (j < cells.size() && cells[j].first == cells[i].first) {
        tp += cells[j].second ? 1 : 0;
        ++j;
      }
      seen = static_cast<int>(j);
      const double recall = static_cast<double>(tp) / positives;
      ap += (recall - prev_recall) * (static_cast<double>(tp) / seen);
      prev_recall = recall;
      i = j;
    }
    ap_sum += ap;
    ++classes;
  }
  return classes ? ap_sum / classes : 0.0;
}

EvalMetrics evaluate(const ModelGraph& graph, const Dataset& data) {
  const std::size_t out_node = single_output(graph);
  const Split& split = data.val;
  constexpr int kBatch = 64;
  EvalMetrics m;
  std::vector<Tensor> outputs;
  double loss = 0.0;
  std::vector<int> all(split.count);
  std::iota(all.begin(), all.end(), 0);
  for (int start = 0; start < split.count; start += kBatch) {
    const std::vector<int> idx(all.begin() + start, all.begin() + std::min(split.count, start + kBatch));
    auto st = forward(graph, data.images(split, idx), Mode::Eval);
    loss += task_loss(data, split, idx, st.values[out_node]).value * idx.size();
    outputs.push_back(std::move(st.values[out_node]));
  }
  m.task_loss = loss / split.count;
  const Tensor& first = outputs.front();
  Tensor scores(split.count, first.channels(), first.height(), first.width());
  std::size_t at = 0;
  for (const auto& o : outputs) {
    std::copy(o.values().begin(), o.values().end(), scores.data() + at);
    at += o.size();
  }
  if (data.spec.kind == TaskKind::DenseHeatmapDetection) {
    m.name = "heatmap_ap";
    m.value = heatmap_ap(scores, data.heatmaps(split, all));
  } else {
    m.name = "accuracy";
    m.value = top1_accuracy(scores, split.labels);
  }
  return m;
}

json history_to_json(const History& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"task_loss", e.task_loss},
                      {"sparsity_penalty", e.sparsity_penalty},
                      {"sparsity_rate", e.sparsity_rate},
                      {"cwd_loss", e.cwd_loss},
                      {"alpha", e.alpha},
                      {"total_loss", e.total_loss},
                      {"metric", e.metric_name},
                      {"val_metric", e.val_metric}});
  return {{"stage", h.stage}, {"epochs", std::move(epochs)}};
}

History history_from_json(const json& doc) {
  History h;
  h.stage = doc.value("stage", std::string());
  for (const auto& e : doc.at("epochs")) {
    EpochMetrics m;
    m.epoch = e.at("epoch").get<int>();
    m.task_loss = e.at("task_loss").get<double>();
    m.sparsity_penalty = e.at("sparsity_penalty").get<double>();
    m.sparsity_rate = e.at("sparsity_rate").get<double>();
    m.cwd_loss = e.at("cwd_loss").get<double>();
    m.alpha = e.at("alpha").get<double>();
    m.total_loss = e.at("total_loss").get<double>();
    m.metric_name = e.at("metric").get<std::string>();
    m.val_metric = e.at("val_metric").get<double>();
    h.epochs.push_back(m);
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelGraph& graph, const History& history) {
  std::filesystem::create_directories(dir);
  save_graph(graph, dir / "model.json");
  std::ofstream out(dir / "history.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "history.json").string());
  out << history_to_json(history).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "model.json")) throw MissingArtifactError("no checkpoint in " + dir.string());
  Checkpoint c{load_graph(dir / "model.json"), {}};
  std::ifstream in(dir / "history.json");
  if (in) c.history = history_from_json(json::parse(in));
  return c;
}

}  // namespace slimcwd::train
