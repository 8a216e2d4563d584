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

// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--config path] [--out dir]
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "helpers.hpp"
#include "slimcwd/distillation.hpp"
#include "slimcwd/executor.hpp"
#include "slimcwd/pipeline.hpp"
#include "slimcwd/profiler.hpp"
#include "slimcwd/pruning.hpp"
#include "slimcwd/sparsity.hpp"
#include "slimcwd/surgery.hpp"

namespace fs = std::filesystem;
using namespace slimcwd;
using testing::SpecBuilder;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict schedule_exactness() {
  const sparsity::ScheduleConfig cfg{0.005, 100, sparsity::ScheduleDirection::AsWrittenDecay};
  const double r0 = sparsity::sparsity_rate(0, cfg), r50 = sparsity::sparsity_rate(50, cfg),
               r100 = sparsity::sparsity_rate(100, cfg);
  return {r0 == 0.005 && r50 == 0.00275 && r100 == 0.0005,
          fmt::format("rate(0)={:.17g} rate(50)={:.17g} rate(100)={:.17g}", r0, r50, r100)};
}

Verdict dead_channel_equivalence() {
  auto g = testing::six_layer_spec().build(7);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> d(0.5f, 1.5f);
  for (auto u : prunable_units(g)) {
    auto& bn = g.batch_norm(u);
    for (int c = 0; c < bn.channels; ++c) {
      bn.gamma[c] = d(rng);
      bn.beta[c] = d(rng) - 1.0f;
      bn.running_mean[c] = d(rng) - 1.0f;
      bn.running_var[c] = d(rng);
    }
  }
  // 2 of 8 channels per layer; the residual pair c1/c2 shares its choice.
  std::map<std::string, std::vector<int>> dead;
  auto kill = [&](const std::vector<std::string>& layers) {
    std::vector<int> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (const auto& l : layers) {
      auto& bn = g.batch_norm(*g.find(l));
      for (int j = 0; j < 2; ++j) bn.gamma[idx[j]] = bn.beta[idx[j]] = 0.0f;
      dead[l] = {idx[0], idx[1]};
    }
  };
  kill({"c1_bn", "c2_bn"});
  for (const char* l : {"c3_bn", "c4_bn", "c5_bn"}) kill({l});

  const auto plan = pruning::make_plan(g, pruning::gammas_of(g), 0.25);
  for (const auto& [layer, gone] : dead) {
    const auto& kept = plan.per_layer.at(layer);
    if (kept.size() != 6u) return {false, layer + " keeps " + std::to_string(kept.size())};
    for (int c : gone)
      if (std::find(kept.begin(), kept.end(), c) != kept.end()) return {false, layer + " kept a dead channel"};
  }
  const auto p = pruning::prune(g, plan).graph;
  float worst = 0.0f;
  for (int s = 0; s < 100; ++s) {
    const auto x = testing::random_tensor(1, 3, 12, 12, 1000 + s, 2.0f);
    worst = std::max(worst, testing::max_abs_diff(predict(g, x)[0], predict(p, x)[0]));
  }
  return {worst < 1e-5f, fmt::format("max |Δ| over 100 inputs = {:.3g} (tol 1e-5), params {} -> {}", worst,
                                     profiler::count_params(g), profiler::count_params(p))};
}

Verdict cwd_correctness() {
  using distill::FeatureMap;
  auto two = [](double a, double b) {
    FeatureMap fm(1, 1, 1, 2);
    fm.values = {a, b};
    return fm;
  };
  std::vector<std::string> notes;
  bool ok = true;

  // (a)
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst_a = 0.0;
  for (int t = 0; t < 20; ++t) {
    FeatureMap fm(2, 3, 4, 4);
    for (auto& v : fm.values) v = u(rng);
    for (double tau : {1.0, 2.0, 6.0}) worst_a = std::max(worst_a, std::abs(distill::cwd_loss(fm, fm, tau)));
  }
  ok &= worst_a <= 1e-9;
  notes.push_back(fmt::format("(a) max identical-feature loss {:.3g}", worst_a));

  // (b) brute force: softmax and KL expanded by hand in long double.
  auto brute = [](long double t0, long double t1, long double s0, long double s1, long double tau) {
    const long double zt = std::exp(t0 / tau) + std::exp(t1 / tau), zs = std::exp(s0 / tau) + std::exp(s1 / tau);
    const long double p0 = std::exp(t0 / tau) / zt, p1 = std::exp(t1 / tau) / zt;
    const long double q0 = std::exp(s0 / tau) / zs, q1 = std::exp(s1 / tau) / zs;
    return tau * tau * (p0 * std::log(p0 / q0) + p1 * std::log(p1 / q1));
  };
  const auto t = two(std::log(2.0), 0.0), s = two(0.0, 0.0);
  for (auto [tau, expect] : {std::pair{1.0, 0.056633}, std::pair{2.0, 0.059148}}) {
    const double got = distill::cwd_loss(t, s, tau);
    const double oracle = static_cast<double>(brute(std::log(2.0L), 0.0L, 0.0L, 0.0L, tau));
    const bool hit = std::abs(got - expect) < 1e-5 && std::abs(oracle - expect) < 1e-5;
    ok &= hit;
    notes.push_back(fmt::format("(b) tau={:g} loss {:.7f} brute {:.7f} expected {:.6f} |err| {:.2g}{}", tau, got,
                                oracle, expect, std::abs(got - expect), hit ? "" : " > 1e-5"));
  }

  // (c)
  double worst_c = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    FeatureMap te(1, 2, 3, 3), st(1, 2, 3, 3);
    for (auto& v : te.values) v = u(rng);
    for (auto& v : st.values) v = u(rng);
    const double tau = 1.0 + trial % 6;
    const auto an = distill::cwd_loss_and_grad(te, st, tau);
    for (std::size_t i = 0; i < st.values.size(); ++i) {
      auto up = st, down = st;
      const double h = 1e-5;
      up.values[i] += h;
      down.values[i] -= h;
      const double fd = (distill::cwd_loss(te, up, tau) - distill::cwd_loss(te, down, tau)) / (2 * h);
      const double g = an.student_grad.values[i];
      worst_c = std::max(worst_c, std::abs(g - fd) / std::max(std::abs(fd), 1e-8));
    }
  }
  ok &= worst_c < 1e-4;
  notes.push_back(fmt::format("(c) max FD rel err {:.3g} on 2x3x3 maps", worst_c));

  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return {ok, detail};
}

Verdict complexity_bilinearity() {
  std::string detail;
  bool ok = true;
  for (int C : {16, 9}) {
    SpecBuilder b(3);
    std::string prev = "input";
    int in = 3;
    for (int i = 0; i < 5; ++i) {
      const std::string id = "c" + std::to_string(i);
      b.cba(id, prev, in, C);
      prev = id + "_act";
      in = C;
    }
    const auto g = b.build();
    const auto plan = pruning::make_plan(g, pruning::gammas_of(g), 0.5);
    const auto p = pruning::prune(g, plan).graph;
    const int H = 16;
    // Interior convs: params and MACs scale by kept^2 / C^2.
    const std::int64_t k = C - C / 2;
    for (int i = 1; i < 5; ++i) {
      const auto id = "c" + std::to_string(i);
      const auto before = g.conv(*g.find(id)).weights.size(), after = p.conv(*p.find(id)).weights.size();
      ok &= static_cast<std::int64_t>(after) * C * C == static_cast<std::int64_t>(before) * k * k;
    }
    // Whole-graph prediction from the plan's kept counts.
    std::int64_t params = 0, macs = 0, prev_k = 3;
    for (int i = 0; i < 5; ++i) {
      const std::int64_t ki = static_cast<std::int64_t>(plan.per_layer.at("c" + std::to_string(i) + "_bn").size());
      params += prev_k * ki * 9 + 2 * ki;
      macs += prev_k * ki * 9 * H * H;
      prev_k = ki;
    }
    const auto got_p = profiler::count_params(p), got_m = profiler::count_macs(p, H, H);
    ok &= got_p == params && got_m == macs;
    detail += fmt::format("{}C={}: params {}->{} (predicted {}), MACs {}->{} (predicted {})", detail.empty() ? "" : "; ",
                          C, profiler::count_params(g), got_p, params, profiler::count_macs(g, H, H), got_m, macs);
  }
  return {ok, detail};
}

Verdict profiler_closed_forms() {
  nlohmann::json spec = SpecBuilder(3).json();
  spec["nodes"].push_back({{"id", "c"},
                           {"kind", "conv"},
                           {"in_channels", 3},
                           {"out_channels", 16},
                           {"kernel", 3},
                           {"stride", 1},
                           {"padding", 1}});
  spec["edges"].push_back({{"from", "input"}, {"to", "c"}});
  const auto g = build_graph(spec, 1);
  const auto p = profiler::count_params(g), m = profiler::count_macs(g, 32, 32), f = profiler::count_flops(g, 32, 32);
  return {p == 432 && m == 442368 && f == 884736, fmt::format("params {} MACs {} FLOPs {}", p, m, f)};
}

Verdict reduction_fidelity() {
  profiler::ComplexityReport base, ours;
  base.params = 25862110;
  ours.params = 6845710;
  base.macs = 49600000000;
  ours.macs = 13300000000;
  base.flops = 2 * base.macs;
  ours.flops = 2 * ours.macs;
  base.size_bytes = 2 * base.params;
  ours.size_bytes = 2 * ours.params;
  const auto r = profiler::reduction_report(base, ours);
  const double got = r.reductions.at("params");
  return {std::abs(got - 73.51) <= 0.1, fmt::format("params reduction {:.4f}% vs 73.51% (tol 0.1 pt)", got)};
}

Verdict alpha_suite() {
  using distill::AlphaSchedule;
  distill::DistillationConfig cfg;
  cfg.alpha0 = 0.5;
  const int T = 50;
  bool ok = true;
  std::string detail;
  for (auto s : {AlphaSchedule::Constant, AlphaSchedule::ExponentialDecay, AlphaSchedule::TimeBasedDecay,
                 AlphaSchedule::CosineAnnealing, AlphaSchedule::InverseSigmoidDecay}) {
    cfg.schedule = s;
    bool mono = true, constant = true;
    for (int t = 1; t <= T; ++t) {
      mono &= distill::alpha_at(t, T, cfg) <= distill::alpha_at(t - 1, T, cfg);
      constant &= distill::alpha_at(t, T, cfg) == cfg.alpha0;
    }
    const bool start = distill::alpha_at(0, T, cfg) == cfg.alpha0;
    ok &= start && mono;
    if (s == AlphaSchedule::Constant) ok &= constant;
    detail += fmt::format("{}{} a(0)={:g} a(T)={:.4g}", detail.empty() ? "" : "; ", distill::schedule_name(s),
                          distill::alpha_at(0, T, cfg), distill::alpha_at(T, T, cfg));
  }
  cfg.schedule = AlphaSchedule::CosineAnnealing;
  for (double amin : {0.05, 0.2}) {
    cfg.alpha_min = amin;
    ok &= std::abs(distill::alpha_at(T, T, cfg) - amin) < 1e-15;
  }
  return {ok, detail};
}

struct E2E {
  std::vector<double> baseline, sparse, finetune, distill, reduction;
};

E2E run_seeds(const pipeline::RunConfig& base, const fs::path& out, const std::vector<std::uint64_t>& seeds) {
  E2E e;
  for (auto seed : seeds) {
    auto cfg = base;
    cfg.seed = seed;
    cfg.task.seed = seed;
    cfg.output_dir = out / ("seed_" + std::to_string(seed));
    fs::remove_all(cfg.output_dir);
    const auto s = pipeline::run_pipeline(cfg);
    std::cout << fmt::format("  seed {}: baseline {:.4f} sparse {:.4f} finetune {:.4f} distill {:.4f} params -{:.2f}%",
                             seed, s.baseline.metric, s.sparse.metric, s.finetune.metric, s.distill.metric,
                             s.param_reduction)
              << std::endl;
    e.baseline.push_back(s.baseline.metric);
    e.sparse.push_back(s.sparse.metric);
    e.finetune.push_back(s.finetune.metric);
    e.distill.push_back(s.distill.metric);
    e.reduction.push_back(s.param_reduction);
  }
  return e;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path config = SLIMCWD_ACCEPTANCE_CONFIG;
  fs::path out = fs::temp_directory_path() / "slimcwd_acceptance";
  for (int i = 1; i + 1 < argc; i += 2) {
    if (!std::strcmp(argv[i], "--config")) config = argv[i + 1];
    else if (!std::strcmp(argv[i], "--out")) out = argv[i + 1];
  }

  report("schedule exactness", schedule_exactness);
  report("dead-channel equivalence", dead_channel_equivalence);
  report("CWD correctness", cwd_correctness);
  report("complexity bilinearity", complexity_bilinearity);
  report("profiler closed forms", profiler_closed_forms);
  report("reduction-report fidelity", reduction_fidelity);

  const auto cfg = pipeline::load_run_config(config);
  E2E e;
  report("end-to-end pipeline", [&] {
    e = run_seeds(cfg, out, {1, 2, 3});
    const double b = median3(e.baseline), s = median3(e.sparse), f = median3(e.finetune), d = median3(e.distill),
                 r = median3(e.reduction);
    const bool i = s >= b - 0.02, ii = r >= 60.0, iii = d >= f;
    return Verdict{i && ii && iii,
                   fmt::format("medians (i) sparse {:.4f} vs baseline {:.4f} - 0.02 {}; (ii) params -{:.2f}% >= 60% {}; "
                               "(iii) distill {:.4f} vs finetune {:.4f} {}",
                               s, b, i ? "ok" : "MISS", r, ii ? "ok" : "MISS", d, f, iii ? "ok" : "MISS")};
  });

  report("alpha-schedule suite", alpha_suite);

  report("determinism", [&] {
    auto again = cfg;
    again.seed = again.task.seed = 1;
    again.output_dir = out / "seed_1_rerun";
    fs::remove_all(again.output_dir);
    pipeline::run_pipeline(again);
    const auto first = out / "seed_1";
    bool same = true;
    std::string detail;
    for (const char* f : {"distill/model.bin", "distill/model.json", "finetune/model.bin", "sparse/model.bin"}) {
      const bool eq = slurp(first / f) == slurp(again.output_dir / f);
      same &= eq;
      detail += fmt::format("{}{} {}", detail.empty() ? "" : ", ", f, eq ? "identical" : "DIFFERS");
    }
    return Verdict{same, detail};
  });

  std::cout << (failures ? fmt::format("{} criterion(s) failed", failures) : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
