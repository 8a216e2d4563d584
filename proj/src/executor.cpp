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

#include "slimcwd/executor.hpp"

#include <cmath>
#include <string>

#include "slimcwd/error.hpp"
#include "slimcwd/kernels.hpp"

namespace slimcwd {
namespace {

kernels::ConvShape conv_shape(const ConvNode& c, const Tensor& x) {
  return {x.batch(), c.in_channels, x.height(), x.width(), c.out_channels, c.kernel, c.stride, c.padding};
}

Tensor conv_forward(const Node& n, const ConvNode& c, const Tensor& x) {
  if (x.channels() != c.in_channels)
    throw ShapeError("node '" + n.id + "' expects " + std::to_string(c.in_channels) + " channels, got " +
                     std::to_string(x.channels()));
  const auto s = conv_shape(c, x);
  if (s.out_h() < 1 || s.out_w() < 1) throw ShapeError("node '" + n.id + "': spatial output underflows");
  Tensor y(x.batch(), c.out_channels, s.out_h(), s.out_w());
  kernels::conv2d_forward(s, x.span(), c.weights, c.bias, y.span());
  return y;
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

}  // namespace

ForwardState forward(const ModelGraph& g, const Tensor& input, Mode mode) {
  ForwardState st;
  st.mode = mode;
  st.values.resize(g.size());
  st.bn_mean.resize(g.size());
  st.bn_var.resize(g.size());
  st.bn_inv_std.resize(g.size());
  st.pool_argmax.resize(g.size());

  for (std::size_t i = 0; i < g.size(); ++i) {
    const Node& n = g.node(i);
    const auto& prod = g.producers(i);
    Tensor& out = st.values[i];

    if (const auto* in = std::get_if<InputNode>(&n.op)) {
      if (input.channels() != in->channels)
        throw ShapeError("graph expects " + std::to_string(in->channels) + " input channels, got " +
                         std::to_string(input.channels()));
      out = input;
    } else if (const auto* c = std::get_if<ConvNode>(&n.op)) {
      out = conv_forward(n, *c, st.values[prod[0]]);
    } else if (const auto* h = std::get_if<HeadNode>(&n.op)) {
      out = conv_forward(n, h->conv, st.values[prod[0]]);
    } else if (const auto* b = std::get_if<BatchNormNode>(&n.op)) {
      const Tensor& x = st.values[prod[0]];
      if (x.channels() != b->channels) throw ShapeError("node '" + n.id + "': channel mismatch");
      const int C = b->channels;
      const std::size_t plane = x.plane();
      const double count = static_cast<double>(x.batch()) * plane;
      auto& mean = st.bn_mean[i];
      auto& var = st.bn_var[i];
      auto& inv = st.bn_inv_std[i];
      mean.assign(C, 0.0f);
      var.assign(C, 0.0f);
      inv.assign(C, 0.0f);
      out = Tensor(x.batch(), C, x.height(), x.width());
#pragma omp parallel for schedule(static)
      for (int ch = 0; ch < C; ++ch) {
        double m = b->running_mean[ch], v = b->running_var[ch];
        if (mode == Mode::Train) {
          double s = 0.0;
          for (int bn = 0; bn < x.batch(); ++bn) {
            const float* p = x.plane_ptr(bn, ch);
            for (std::size_t k = 0; k < plane; ++k) s += p[k];
          }
          m = s / count;
          double sq = 0.0;
          for (int bn = 0; bn < x.batch(); ++bn) {
            const float* p = x.plane_ptr(bn, ch);
            for (std::size_t k = 0; k < plane; ++k) sq += (p[k] - m) * (p[k] - m);
          }
          v = sq / count;
        }
        mean[ch] = static_cast<float>(m);
        var[ch] = static_cast<float>(v);
        const double istd = 1.0 / std::sqrt(v + b->epsilon);
        inv[ch] = static_cast<float>(istd);
        const float scale = static_cast<float>(b->gamma[ch] * istd);
        const float shift = static_cast<float>(b->beta[ch] - b->gamma[ch] * m * istd);
        for (int bn = 0; bn < x.batch(); ++bn) {
          const float* p = x.plane_ptr(bn, ch);
          float* q = out.plane_ptr(bn, ch);
          for (std::size_t k = 0; k < plane; ++k) q[k] = p[k] * scale + shift;
        }
      }
    } else if (const auto* a = std::get_if<ActivationNode>(&n.op)) {
      out = st.values[prod[0]];
      auto& v = out.values();
      switch (a->kind) {
        case Activation::SiLU:
#pragma omp parallel for schedule(static)
          for (std::size_t k = 0; k < v.size(); ++k) v[k] = silu(v[k]);
          break;
        case Activation::ReLU:
          for (auto& e : v) e = e > 0.0f ? e : 0.0f;
          break;
        case Activation::Identity: break;
      }
    } else if (std::holds_alternative<ConcatNode>(n.op)) {
      const Tensor& first = st.values[prod[0]];
      int total = 0;
      for (auto p : prod) {
        const Tensor& t = st.values[p];
        if (t.batch() != first.batch() || t.height() != first.height() || t.width() != first.width())
          throw ShapeError("node '" + n.id + "': concat inputs differ in batch or spatial size");
        total += t.channels();
      }
      out = Tensor(first.batch(), total, first.height(), first.width());
      const std::size_t plane = first.plane();
      for (int bn = 0; bn < first.batch(); ++bn) {
        int offset = 0;
        for (auto p : prod) {
          const Tensor& t = st.values[p];
          std::copy(t.plane_ptr(bn, 0), t.plane_ptr(bn, 0) + plane * t.channels(), out.plane_ptr(bn, offset));
          offset += t.channels();
        }
      }
    } else if (std::holds_alternative<AddNode>(n.op)) {
      const Tensor& l = st.values[prod[0]];
      const Tensor& r = st.values[prod[1]];
      if (!l.same_shape(r)) throw ShapeError("node '" + n.id + "': add operands differ in shape");
      out = l;
      auto& v = out.values();
      const auto& w = r.values();
      for (std::size_t k = 0; k < v.size(); ++k) v[k] += w[k];
    } else if (const auto* u = std::get_if<UpsampleNode>(&n.op)) {
      const Tensor& x = st.values[prod[0]];
      const int f = u->factor;
      out = Tensor(x.batch(), x.channels(), x.height() * f, x.width() * f);
#pragma omp parallel for schedule(static)
      for (int p = 0; p < x.batch() * x.channels(); ++p) {
        const float* src = x.plane_ptr(p / x.channels(), p % x.channels());
        float* dst = out.plane_ptr(p / x.channels(), p % x.channels());
        for (int yy = 0; yy < out.height(); ++yy)
          for (int xx = 0; xx < out.width(); ++xx) dst[yy * out.width() + xx] = src[(yy / f) * x.width() + xx / f];
      }
    } else if (const auto* mp = std::get_if<MaxPoolNode>(&n.op)) {
      const Tensor& x = st.values[prod[0]];
      const int oh = (x.height() + 2 * mp->padding - mp->kernel) / mp->stride + 1;
      const int ow = (x.width() + 2 * mp->padding - mp->kernel) / mp->stride + 1;
      if (oh < 1 || ow < 1) throw ShapeError("node '" + n.id + "': spatial output underflows");
      out = Tensor(x.batch(), x.channels(), oh, ow);
      st.pool_argmax[i].assign(out.size(), 0);
      kernels::maxpool2d_forward(x.batch(), x.channels(), x.height(), x.width(), mp->kernel, mp->stride,
                                 mp->padding, x.span(), out.span(), st.pool_argmax[i]);
    }
  }
  return st;
}

std::vector<Tensor> predict(const ModelGraph& graph, const Tensor& input) {
  auto st = forward(graph, input, Mode::Eval);
  std::vector<Tensor> out;
  for (auto i : graph.outputs()) out.push_back(std::move(st.values[i]));
  return out;
}

void update_running_stats(ModelGraph& g, const ForwardState& st, double momentum) {
  if (st.mode != Mode::Train) return;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::holds_alternative<BatchNormNode>(g.node(i).op)) continue;
    auto& b = g.batch_norm(i);
    const Tensor& x = st.values[g.producers(i)[0]];
    const double count = static_cast<double>(x.batch()) * x.plane();
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    for (int c = 0; c < b.channels; ++c) {
      b.running_mean[c] = static_cast<float>((1.0 - momentum) * b.running_mean[c] + momentum * st.bn_mean[i][c]);
      b.running_var[c] =
          static_cast<float>((1.0 - momentum) * b.running_var[c] + momentum * st.bn_var[i][c] * unbias);
    }
  }
}

Gradients backward(const ModelGraph& g, const ForwardState& st,
                   std::span<const std::pair<std::size_t, Tensor>> seeds) {
  std::vector<Tensor> grad(g.size());
  auto accumulate = [&](std::size_t i, const Tensor& d) {
    if (grad[i].empty()) {
      grad[i] = d;
      return;
    }
    auto& v = grad[i].values();
    const auto& w = d.values();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += w[k];
  };
  for (const auto& [i, d] : seeds) {
    if (!d.same_shape(st.values[i]))
      throw ShapeError("gradient seed for '" + g.node(i).id + "' does not match its feature map shape");
    accumulate(i, d);
  }

  Gradients out;
  out.params.resize(g.size());
  for (std::size_t ii = g.size(); ii-- > 0;) {
    if (grad[ii].empty()) continue;
    const Node& n = g.node(ii);
    const auto& prod = g.producers(ii);
    const Tensor& dy = grad[ii];

    auto conv_backward = [&](const ConvNode& c) {
      const Tensor& x = st.values[prod[0]];
      const auto s = conv_shape(c, x);
      auto& pg = out.params[ii];
      pg.weight.assign(c.weights.size(), 0.0f);
      pg.bias.assign(c.has_bias ? c.out_channels : 0, 0.0f);
      kernels::conv2d_backward_filter(s, x.span(), dy.span(), pg.weight, pg.bias);
      Tensor dx(x.batch(), x.channels(), x.height(), x.width());
      kernels::conv2d_backward_data(s, dy.span(), c.weights, dx.span());
      accumulate(prod[0], dx);
    };

    if (std::holds_alternative<InputNode>(n.op)) {
      out.input = dy;
    } else if (const auto* c = std::get_if<ConvNode>(&n.op)) {
      conv_backward(*c);
    } else if (const auto* h = std::get_if<HeadNode>(&n.op)) {
      conv_backward(h->conv);
    } else if (const auto* b = std::get_if<BatchNormNode>(&n.op)) {
      const Tensor& x = st.values[prod[0]];
      const int C = b->channels;
      const std::size_t plane = x.plane();
      const double count = static_cast<double>(x.batch()) * plane;
      auto& pg = out.params[ii];
      pg.weight.assign(C, 0.0f);
      pg.bias.assign(C, 0.0f);
      Tensor dx(x.batch(), C, x.height(), x.width());
#pragma omp parallel for schedule(static)
      for (int ch = 0; ch < C; ++ch) {
        const double m = st.bn_mean[ii][ch];
        const double istd = st.bn_inv_std[ii][ch];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int bn = 0; bn < x.batch(); ++bn) {
          const float* p = x.plane_ptr(bn, ch);
          const float* d = dy.plane_ptr(bn, ch);
          for (std::size_t k = 0; k < plane; ++k) {
            sum_dy += d[k];
            sum_dy_xhat += d[k] * (p[k] - m) * istd;
          }
        }
        pg.weight[ch] = static_cast<float>(sum_dy_xhat);
        pg.bias[ch] = static_cast<float>(sum_dy);
        const double gamma = b->gamma[ch];
        for (int bn = 0; bn < x.batch(); ++bn) {
          const float* p = x.plane_ptr(bn, ch);
          const float* d = dy.plane_ptr(bn, ch);
          float* q = dx.plane_ptr(bn, ch);
          if (st.mode == Mode::Train) {
            for (std::size_t k = 0; k < plane; ++k) {
              const double xhat = (p[k] - m) * istd;
              q[k] = static_cast<float>(gamma * istd / count * (count * d[k] - sum_dy - xhat * sum_dy_xhat));
            }
          } else {
            for (std::size_t k = 0; k < plane; ++k) q[k] = static_cast<float>(gamma * istd * d[k]);
          }
        }
      }
      accumulate(prod[0], dx);
    } else if (const auto* a = std::get_if<ActivationNode>(&n.op)) {
      const Tensor& x = st.values[prod[0]];
      Tensor dx = dy;
      auto& v = dx.values();
      const auto& xv = x.values();
      switch (a->kind) {
        case Activation::SiLU:
#pragma omp parallel for schedule(static)
          for (std::size_t k = 0; k < v.size(); ++k) {
            const float s = 1.0f / (1.0f + std::exp(-xv[k]));
            v[k] *= s * (1.0f + xv[k] * (1.0f - s));
          }
          break;
        case Activation::ReLU:
          for (std::size_t k = 0; k < v.size(); ++k)
            if (!(xv[k] > 0.0f)) v[k] = 0.0f;
          break;
        case Activation::Identity: break;
      }
      accumulate(prod[0], dx);
    } else if (std::holds_alternative<ConcatNode>(n.op)) {
      const std::size_t plane = dy.plane();
      int offset = 0;
      for (auto p : prod) {
        const Tensor& t = st.values[p];
        Tensor dx(t.batch(), t.channels(), t.height(), t.width());
        for (int bn = 0; bn < t.batch(); ++bn)
          std::copy(dy.plane_ptr(bn, offset), dy.plane_ptr(bn, offset) + plane * t.channels(), dx.plane_ptr(bn, 0));
        offset += t.channels();
        accumulate(p, dx);
      }
    } else if (std::holds_alternative<AddNode>(n.op)) {
      accumulate(prod[0], dy);
      accumulate(prod[1], dy);
    } else if (const auto* u = std::get_if<UpsampleNode>(&n.op)) {
      const Tensor& x = st.values[prod[0]];
      const int f = u->factor;
      Tensor dx(x.batch(), x.channels(), x.height(), x.width());
      for (int p = 0; p < x.batch() * x.channels(); ++p) {
        const float* src = dy.plane_ptr(p / x.channels(), p % x.channels());
        float* dst = dx.plane_ptr(p / x.channels(), p % x.channels());
        for (int yy = 0; yy < dy.height(); ++yy)
          for (int xx = 0; xx < dy.width(); ++xx) dst[(yy / f) * x.width() + xx / f] += src[yy * dy.width() + xx];
      }
      accumulate(prod[0], dx);
    } else if (std::holds_alternative<MaxPoolNode>(n.op)) {
      const Tensor& x = st.values[prod[0]];
      Tensor dx(x.batch(), x.channels(), x.height(), x.width());
      const std::size_t in_plane = x.plane(), out_plane = dy.plane();
      const auto& arg = st.pool_argmax[ii];
      for (std::size_t p = 0; p < static_cast<std::size_t>(x.batch()) * x.channels(); ++p)
        for (std::size_t k = 0; k < out_plane; ++k) {
          const int at = arg[p * out_plane + k];
          if (at >= 0) dx.data()[p * in_plane + at] += dy.data()[p * out_plane + k];
        }
      accumulate(prod[0], dx);
    }
  }
  return out;
}

}  // namespace slimcwd
