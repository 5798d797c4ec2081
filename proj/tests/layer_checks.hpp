// Copyright 2026 The dilfcn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dilfcn/graph.hpp"
#include "dilfcn/layers.hpp"
#include "oracles.hpp"

namespace checks {

using dilfcn::LabelMap;
using dilfcn::Shape4;
using dilfcn::Tensor64;

struct LayerError {
  std::string name;
  double max_error = 0.0;
};

/// T is the precision of the analytic backward pass. Inputs are drawn in
/// double, rounded to T, and the central differences are taken in double at
/// that rounded point.
template <typename T>
class LayerFd {
 public:
  explicit LayerFd(std::uint64_t seed, double eps = 1e-5) : rng_(seed), eps_(eps) {}

  std::vector<LayerError> run() {
    std::vector<LayerError> out;
    conv(out);
    maxpool(out);
    relu(out);
    deconv(out);
    crop(out);
    softmax(out);
    squared(out);
    return out;
  }

 private:
  using TT = dilfcn::BasicTensor<T>;

  Tensor64 draw(const Shape4& s) { return oracle::round_to_float(oracle::random_tensor(s, rng_)); }
  Tensor64 draw_separated(const Shape4& s) {
    return oracle::round_to_float(oracle::separated_tensor(s, rng_));
  }
  std::size_t pick(std::size_t lo, std::size_t hi) { return lo + rng_.below(hi - lo + 1); }
  static TT low(const Tensor64& t) { return t.template cast<T>(); }
  static Tensor64 high(const TT& t) { return t.template cast<double>(); }

  void conv(std::vector<LayerError>& out) {
    dilfcn::ConvSpec spec;
    spec.kernel = pick(1, 3);
    spec.dilation = pick(1, 3);
    spec.stride = pick(1, 2);
    spec.pad = pick(0, 2);
    spec.out_channels = pick(1, 3);
    const std::size_t keff = spec.effective_kernel();
    const std::size_t lo = keff > 2 * spec.pad + 1 ? keff - 2 * spec.pad : 1;
    const std::size_t ext = pick(std::max<std::size_t>(lo, 3), 7);
    const std::size_t cin = pick(1, 3);
    const Tensor64 x = draw(Shape4{pick(1, 2), cin, ext, pick(std::max<std::size_t>(lo, 3), 7)});
    const Tensor64 w = draw(Shape4{spec.out_channels, cin, spec.kernel, spec.kernel});
    Tensor64 b = draw(Shape4{spec.out_channels, 1, 1, 1});
    const Tensor64 probe_shape = oracle::conv(x, w, {}, spec.stride, spec.pad, spec.dilation);
    const Tensor64 r = draw(probe_shape.shape());

    const auto g = dilfcn::conv2d_backward(low(x), low(w), spec, low(r));
    auto bias_vec = [](const Tensor64& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
    auto loss = [&](const Tensor64& xi, const Tensor64& wi, const Tensor64& bi) {
      return dilfcn::inner_product(r, oracle::conv(xi, wi, bias_vec(bi), spec.stride, spec.pad, spec.dilation));
    };
    double worst = oracle::max_fd_error(high(g.input), x, [&](const Tensor64& v) { return loss(v, w, b); }, eps_);
    worst = std::max(worst, oracle::max_fd_error(high(g.weights), w, [&](const Tensor64& v) { return loss(x, v, b); }, eps_));
    worst = std::max(worst, oracle::max_fd_error(high(g.bias), b, [&](const Tensor64& v) { return loss(x, w, v); }, eps_));
    out.push_back({"conv", worst});
  }

  void maxpool(std::vector<LayerError>& out) {
    dilfcn::PoolSpec spec{pick(2, 3), pick(1, 2)};
    const Tensor64 x = draw_separated(Shape4{pick(1, 2), pick(1, 3), pick(spec.kernel, 7), pick(spec.kernel, 7)});
    const Tensor64 r = draw(oracle::maxpool(x, spec.kernel, spec.stride).shape());
    const auto fwd = dilfcn::maxpool_forward(low(x), spec);
    const auto g = dilfcn::maxpool_backward<T>(x.shape(), fwd.argmax, low(r));
    const double e = oracle::max_fd_error(high(g), x, [&](const Tensor64& v) {
      return dilfcn::inner_product(r, oracle::maxpool(v, spec.kernel, spec.stride));
    }, eps_);
    out.push_back({"maxpool", e});
  }

  void relu(std::vector<LayerError>& out) {
    const Tensor64 x = draw_separated(Shape4{pick(1, 2), pick(1, 3), pick(1, 7), pick(1, 7)});
    const Tensor64 r = draw(x.shape());
    const auto g = dilfcn::relu_backward(low(x), low(r));
    const double e = oracle::max_fd_error(high(g), x, [&](const Tensor64& v) {
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) s += r[i] * std::max(0.0, v[i]);
      return s;
    }, eps_);
    out.push_back({"relu", e});
  }

  void deconv(std::vector<LayerError>& out) {
    dilfcn::DeconvSpec spec;
    spec.stride = 2;
    spec.kernel = pick(2, 4);
    spec.classwise = rng_.below(2) == 0;
    spec.frozen = false;
    const std::size_t cin = pick(1, 3);
    spec.channels = spec.classwise ? cin : pick(1, 3);
    const Tensor64 x = draw(Shape4{pick(1, 2), cin, pick(1, 4), pick(1, 4)});
    Tensor64 w = draw(Shape4{cin, spec.channels, spec.kernel, spec.kernel});
    if (spec.classwise) {
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t o = 0; o < spec.channels; ++o)
          if (c != o)
            for (std::size_t i = 0; i < spec.kernel * spec.kernel; ++i) w.plane(c, o)[i] = 0.0;
    }
    const Tensor64 r = draw(oracle::deconv(x, w, spec.stride, spec.classwise).shape());
    const auto g = dilfcn::deconv_backward(low(x), low(w), spec, low(r));
    auto loss = [&](const Tensor64& xi, const Tensor64& wi) {
      return dilfcn::inner_product(r, oracle::deconv(xi, wi, spec.stride, spec.classwise));
    };
    double worst = oracle::max_fd_error(high(g.input), x, [&](const Tensor64& v) { return loss(v, w); }, eps_);
    Tensor64 gw = high(g.weights);
    if (spec.classwise) {
      // Off-diagonal kernels are not read, so only the diagonal is compared.
      Tensor64 diag_g(Shape4{cin, 1, spec.kernel, spec.kernel});
      Tensor64 diag_w(diag_g.shape());
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t i = 0; i < spec.kernel * spec.kernel; ++i) {
          diag_g.plane(c, 0)[i] = gw.plane(c, c)[i];
          diag_w.plane(c, 0)[i] = w.plane(c, c)[i];
        }
      worst = std::max(worst, oracle::max_fd_error(diag_g, diag_w, [&](const Tensor64& v) {
        Tensor64 full = w;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t i = 0; i < spec.kernel * spec.kernel; ++i) full.plane(c, c)[i] = v.plane(c, 0)[i];
        return loss(x, full);
      }, eps_));
    } else {
      worst = std::max(worst, oracle::max_fd_error(gw, w, [&](const Tensor64& v) { return loss(x, v); }, eps_));
    }
    out.push_back({"deconv", worst});
  }

  void crop(std::vector<LayerError>& out) {
    const Tensor64 x = draw(Shape4{1, pick(1, 3), pick(2, 7), pick(2, 7)});
    const std::size_t th = pick(1, x.shape().h), tw = pick(1, x.shape().w);
    const std::size_t oy = (x.shape().h - th) / 2, ox = (x.shape().w - tw) / 2;
    const Tensor64 r = draw(Shape4{1, x.shape().c, th, tw});
    const auto g = dilfcn::crop_backward<T>(x.shape(), low(r));
    const double e = oracle::max_fd_error(high(g), x, [&](const Tensor64& v) {
      double s = 0.0;
      for (std::size_t c = 0; c < v.shape().c; ++c)
        for (std::size_t y = 0; y < th; ++y)
          for (std::size_t xx = 0; xx < tw; ++xx) s += r.at(0, c, y, xx) * v.at(0, c, y + oy, xx + ox);
      return s;
    }, eps_);
    out.push_back({"crop", e});
  }

  void softmax(std::vector<LayerError>& out) {
    const std::size_t classes = pick(2, 5);
    const Tensor64 x = draw(Shape4{pick(1, 2), classes, pick(1, 4), pick(1, 4)});
    LabelMap labels(x.shape().n, x.shape().h, x.shape().w);
    for (auto& l : labels.labels) {
      l = static_cast<std::uint16_t>(rng_.below(classes + 1));
      if (l == classes) l = dilfcn::kIgnoreLabel;
    }
    labels.labels[0] = 0;
    const auto res = dilfcn::softmax_xent_loss(low(x), labels);
    const double e = oracle::max_fd_error(high(res.grad_logits), x, [&](const Tensor64& v) {
      double s = 0.0;
      std::size_t counted = 0;
      for (std::size_t n = 0; n < v.shape().n; ++n)
        for (std::size_t y = 0; y < v.shape().h; ++y)
          for (std::size_t xx = 0; xx < v.shape().w; ++xx) {
            const auto l = labels.at(n, y, xx);
            if (l == dilfcn::kIgnoreLabel) continue;
            double z = 0.0;
            for (std::size_t c = 0; c < classes; ++c) z += std::exp(v.at(n, c, y, xx));
            s += std::log(z) - v.at(n, l, y, xx);
            ++counted;
          }
      return s / static_cast<double>(counted);
    }, eps_);
    out.push_back({"softmax_xent", e});
  }

  void squared(std::vector<LayerError>& out) {
    const Tensor64 x = draw(Shape4{1, pick(1, 3), pick(1, 5), pick(1, 5)});
    const Tensor64 t = draw(x.shape());
    const auto res = dilfcn::squared_error_loss(low(x), low(t));
    const double e = oracle::max_fd_error(high(res.grad_logits), x, [&](const Tensor64& v) {
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) s += 0.5 * (v[i] - t[i]) * (v[i] - t[i]);
      return s;
    }, eps_);
    out.push_back({"squared_error", e});
  }

  dilfcn::Rng rng_;
  double eps_;
};

/// conv -> relu, scored directly.
inline dilfcn::Graph toy_graph(std::size_t classes = 3) {
  dilfcn::Graph g;
  g.add(dilfcn::LayerSpec::input("data", 2));
  dilfcn::ConvSpec c;
  c.out_channels = classes;
  c.kernel = 3;
  c.pad = 1;
  g.add(dilfcn::LayerSpec::conv("conv", "data", c));
  g.add(dilfcn::LayerSpec::relu("relu", "conv"));
  return g;
}

/// Every layer kind in one small DAG: dilated conv, pool, dropout, an
/// unfrozen deconvolution, a crop and a scaled skip sum.
inline dilfcn::Graph composed_graph(std::size_t classes = 3) {
  using dilfcn::LayerSpec;
  dilfcn::Graph g;
  g.add(LayerSpec::input("data", 2));
  dilfcn::ConvSpec c1;
  c1.out_channels = 4;
  c1.kernel = 3;
  c1.pad = 2;
  c1.dilation = 2;
  g.add(LayerSpec::conv("conv1", "data", c1));
  g.add(LayerSpec::relu("relu1", "conv1"));
  g.add(LayerSpec::pool("pool1", "relu1", dilfcn::PoolSpec{2, 2}));
  dilfcn::ConvSpec c2;
  c2.out_channels = 4;
  c2.kernel = 3;
  c2.pad = 1;
  g.add(LayerSpec::conv("conv2", "pool1", c2));
  g.add(LayerSpec::relu("relu2", "conv2"));
  g.add(LayerSpec::dropout("drop2", "relu2", 0.25));
  dilfcn::ConvSpec score;
  score.out_channels = classes;
  g.add(LayerSpec::conv("score", "drop2", score));
  dilfcn::DeconvSpec up;
  up.channels = classes;
  up.kernel = 4;
  up.stride = 2;
  up.frozen = false;
  up.classwise = false;
  g.add(LayerSpec::deconv("up", "score", up));
  g.add(LayerSpec::crop("up_crop", "up", "data"));
  dilfcn::ConvSpec skip;
  skip.out_channels = classes;
  g.add(LayerSpec::conv("score_skip", "relu1", skip, dilfcn::WeightInit::Zero));
  g.add(LayerSpec::sum("fuse", {"up_crop", "score_skip"}, {1.0, 0.5}));
  return g;
}

}  // namespace checks
