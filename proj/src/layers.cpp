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

#include "dilfcn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "dilfcn/random.hpp"
#include "im2col.hpp"

namespace dilfcn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
using AccMat = RowMat<double>;

// dst = a * b with double accumulation regardless of the storage type.
template <typename Dst, typename A, typename B>
void assign_product(Dst&& dst, const A& a, const B& b) {
  using T = typename std::decay_t<Dst>::Scalar;
  if constexpr (std::is_same_v<T, double>) {
    dst.noalias() = a * b;
  } else {
    dst = (a.template cast<double>() * b.template cast<double>()).template cast<T>();
  }
}

std::string dims(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  return Shape4{a, b, c, d}.str();
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel == 1 && s.stride == 1 && s.pad == 0;
}

}  // namespace

void ConvSpec::validate() const {
  if (out_channels < 1 || kernel < 1 || stride < 1 || dilation < 1) {
    throw ShapeError("conv spec needs out_channels, kernel, stride, dilation >= 1");
  }
}

void PoolSpec::validate() const {
  if (kernel < 1 || stride < 1) throw ShapeError("pool spec needs kernel, stride >= 1");
}

void DeconvSpec::validate() const {
  if (channels < 1) throw ShapeError("deconv spec needs channels >= 1");
  if (stride < 2) throw ShapeError("deconv stride must be >= 2");
  if (kernel < stride) {
    throw ShapeError("deconv kernel " + std::to_string(kernel) + " smaller than stride " +
                     std::to_string(stride) + " leaves coverage gaps");
  }
}

std::size_t conv_output_extent(std::size_t in, std::size_t pad, std::size_t kernel,
                               std::size_t stride, std::size_t dilation) {
  const std::size_t k_eff = kernel + (kernel - 1) * (dilation - 1);
  if (in + 2 * pad < k_eff) {
    throw ShapeError("effective kernel " + std::to_string(k_eff) +
                     " larger than padded input " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k_eff) / stride + 1;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              std::span<const T> bias, const ConvSpec& spec) {
  spec.validate();
  const Shape4& is = input.shape();
  const Shape4& ws = weights.shape();
  const Shape4 expected{spec.out_channels, is.c, spec.kernel, spec.kernel};
  if (!(ws == expected)) {
    throw ShapeError("conv weights " + ws.str() + " do not match expected " + expected.str());
  }
  if (!bias.empty() && bias.size() != spec.out_channels) {
    throw ShapeError("conv bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(spec.out_channels));
  }
  const detail::Window g{is.c,        is.h,        is.w,
                         spec.kernel, spec.stride, spec.pad,
                         spec.dilation,
                         conv_output_extent(is.h, spec.pad, spec.kernel, spec.stride, spec.dilation),
                         conv_output_extent(is.w, spec.pad, spec.kernel, spec.stride, spec.dilation)};

  BasicTensor<T> out(Shape4{is.n, spec.out_channels, g.out_h, g.out_w});
  const bool pointwise = is_pointwise(spec);
  std::vector<T> col(pointwise ? 0 : g.col_rows() * g.col_cols());
  const ConstMatMap<T> w(weights.ptr(), static_cast<Eigen::Index>(spec.out_channels),
                         static_cast<Eigen::Index>(g.col_rows()));
  const auto rows = static_cast<Eigen::Index>(g.col_rows());
  const auto cols = static_cast<Eigen::Index>(g.col_cols());

  for (std::size_t n = 0; n < is.n; ++n) {
    const T* col_ptr = input.plane(n, 0);
    if (!pointwise) {
      detail::im2col(input.plane(n, 0), g, col.data());
      col_ptr = col.data();
    }
    MatMap<T> o(out.plane(n, 0), static_cast<Eigen::Index>(spec.out_channels), cols);
    assign_product(o, w, ConstMatMap<T>(col_ptr, rows, cols));
    if (!bias.empty()) {
      for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
        o.row(static_cast<Eigen::Index>(oc)).array() += bias[oc];
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const ConvSpec& spec, const BasicTensor<T>& grad_out) {
  spec.validate();
  const Shape4& is = input.shape();
  const Shape4 expected_w{spec.out_channels, is.c, spec.kernel, spec.kernel};
  require_same_shape(weights.shape(), expected_w, "conv2d_backward weights");
  const detail::Window g{is.c,        is.h,        is.w,
                         spec.kernel, spec.stride, spec.pad,
                         spec.dilation,
                         conv_output_extent(is.h, spec.pad, spec.kernel, spec.stride, spec.dilation),
                         conv_output_extent(is.w, spec.pad, spec.kernel, spec.stride, spec.dilation)};
  require_same_shape(grad_out.shape(), Shape4{is.n, spec.out_channels, g.out_h, g.out_w},
                     "conv2d_backward grad_out");

  ConvGrads<T> grads{BasicTensor<T>(is), BasicTensor<T>(weights.shape()),
                     BasicTensor<T>(Shape4{spec.out_channels, 1, 1, 1})};
  const bool pointwise = is_pointwise(spec);
  const auto rows = static_cast<Eigen::Index>(g.col_rows());
  const auto cols = static_cast<Eigen::Index>(g.col_cols());
  const auto outc = static_cast<Eigen::Index>(spec.out_channels);
  std::vector<T> col(pointwise ? 0 : g.col_rows() * g.col_cols());
  AccMat gcol(pointwise ? 0 : rows, pointwise ? 0 : cols);
  std::vector<double> gin(pointwise ? 0 : is.c * is.h * is.w);
  const ConstMatMap<T> w(weights.ptr(), outc, rows);
  AccMat gw = AccMat::Zero(outc, rows);
  std::vector<double> gb(spec.out_channels, 0.0);

  for (std::size_t n = 0; n < is.n; ++n) {
    const T* col_ptr = input.plane(n, 0);
    if (!pointwise) {
      detail::im2col(input.plane(n, 0), g, col.data());
      col_ptr = col.data();
    }
    const ConstMatMap<T> go(grad_out.plane(n, 0), outc, cols);
    gw.noalias() += go.template cast<double>() *
                    ConstMatMap<T>(col_ptr, rows, cols).template cast<double>().transpose();
    if (spec.has_bias) {
      for (Eigen::Index oc = 0; oc < outc; ++oc) {
        gb[static_cast<std::size_t>(oc)] += go.row(oc).template cast<double>().sum();
      }
    }
    if (pointwise) {
      assign_product(MatMap<T>(grads.input.plane(n, 0), rows, cols), w.transpose(), go);
    } else {
      gcol.noalias() = w.template cast<double>().transpose() * go.template cast<double>();
      std::fill(gin.begin(), gin.end(), 0.0);
      detail::col2im(gcol.data(), g, gin.data());
      std::copy(gin.begin(), gin.end(), grads.input.plane(n, 0));
    }
  }
  MatMap<T>(grads.weights.ptr(), outc, rows) = gw.template cast<T>();
  for (std::size_t oc = 0; oc < spec.out_channels; ++oc) grads.bias[oc] = static_cast<T>(gb[oc]);
  return grads;
}

// ---------------------------------------------------------------------------

template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& input, const PoolSpec& spec) {
  spec.validate();
  const Shape4& is = input.shape();
  if (is.h < spec.kernel || is.w < spec.kernel) {
    throw ShapeError("pool window " + std::to_string(spec.kernel) + " larger than input " +
                     is.str());
  }
  const std::size_t oh = (is.h - spec.kernel) / spec.stride + 1;
  const std::size_t ow = (is.w - spec.kernel) / spec.stride + 1;
  PoolResult<T> r{BasicTensor<T>(Shape4{is.n, is.c, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++o) {
          std::size_t best = input.index(n, c, y * spec.stride, x * spec.stride);
          T best_v = input[best];
          for (std::size_t i = 0; i < spec.kernel; ++i) {
            for (std::size_t j = 0; j < spec.kernel; ++j) {
              const std::size_t idx = input.index(n, c, y * spec.stride + i, x * spec.stride + j);
              if (input[idx] > best_v) {
                best_v = input[idx];
                best = idx;
              }
            }
          }
          r.output[o] = best_v;
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape4& input_shape, std::span<const std::size_t> argmax,
                                const BasicTensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool_backward: cache holds " + std::to_string(argmax.size()) +
                     " entries but grad_out has " + std::to_string(grad_out.size()));
  }
  BasicTensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.size()) throw ShapeError("maxpool_backward: argmax out of range");
    g[argmax[i]] += grad_out[i];
  }
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
  require_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  BasicTensor<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

// ---------------------------------------------------------------------------

std::vector<double> bilinear_profile(std::size_t kernel) {
  if (kernel < 2) throw ShapeError("bilinear kernel must be >= 2");
  const double f = std::ceil(static_cast<double>(kernel) / 2.0);
  // Center in tap units, a half-integer, so the profile is exactly symmetric.
  const double center = (2.0 * f - 1.0 - static_cast<double>(kernel % 2)) / 2.0;
  std::vector<double> p(kernel);
  for (std::size_t i = 0; i < kernel; ++i) {
    p[i] = 1.0 - std::abs(static_cast<double>(i) - center) / f;
  }
  return p;
}

template <typename T>
BasicTensor<T> make_bilinear_kernel(std::size_t kernel, std::size_t channels, bool classwise) {
  const std::vector<double> p = bilinear_profile(kernel);
  BasicTensor<T> w(Shape4{channels, channels, kernel, kernel});
  for (std::size_t a = 0; a < channels; ++a) {
    for (std::size_t b = 0; b < channels; ++b) {
      if (classwise && a != b) continue;
      for (std::size_t i = 0; i < kernel; ++i) {
        for (std::size_t j = 0; j < kernel; ++j) w.at(a, b, i, j) = static_cast<T>(p[i] * p[j]);
      }
    }
  }
  return w;
}

namespace {

void check_deconv(const Shape4& is, const Shape4& ws, const DeconvSpec& spec) {
  spec.validate();
  const Shape4 expected{is.c, spec.channels, spec.kernel, spec.kernel};
  if (!(ws == expected)) {
    throw ShapeError("deconv weights " + ws.str() + " do not match expected " + expected.str());
  }
  if (spec.classwise && is.c != spec.channels) {
    throw ShapeError("classwise deconv needs equal in/out channels, got " +
                     std::to_string(is.c) + " -> " + std::to_string(spec.channels));
  }
}

detail::Window deconv_window(const Shape4& is, const DeconvSpec& spec) {
  const std::size_t oh = (is.h - 1) * spec.stride + spec.kernel;
  const std::size_t ow = (is.w - 1) * spec.stride + spec.kernel;
  // The convolution this layer is the adjoint of maps (channels, oh, ow) to (in_c, h, w).
  return detail::Window{spec.channels, oh, ow, spec.kernel, spec.stride, 0, 1, is.h, is.w};
}

}  // namespace

template <typename T>
BasicTensor<T> deconv_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const DeconvSpec& spec) {
  const Shape4& is = input.shape();
  check_deconv(is, weights.shape(), spec);
  const detail::Window g = deconv_window(is, spec);
  BasicTensor<T> out(Shape4{is.n, spec.channels, g.in_h, g.in_w});
  const std::size_t k = spec.kernel;
  const std::size_t s = spec.stride;

  if (spec.classwise) {
    std::vector<double> acc(g.in_h * g.in_w);
    for (std::size_t n = 0; n < is.n; ++n) {
      for (std::size_t c = 0; c < is.c; ++c) {
        const T* in = input.plane(n, c);
        const T* w = weights.ptr() + weights.index(c, c, 0, 0);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t y = 0; y < is.h; ++y) {
          for (std::size_t x = 0; x < is.w; ++x) {
            const double v = in[y * is.w + x];
            for (std::size_t i = 0; i < k; ++i) {
              double* orow = acc.data() + (y * s + i) * g.in_w + x * s;
              const T* wrow = w + i * k;
              for (std::size_t j = 0; j < k; ++j) orow[j] += v * wrow[j];
            }
          }
        }
        std::copy(acc.begin(), acc.end(), out.plane(n, c));
      }
    }
    return out;
  }

  const auto rows = static_cast<Eigen::Index>(g.col_rows());
  const auto cols = static_cast<Eigen::Index>(g.col_cols());
  const auto inc = static_cast<Eigen::Index>(is.c);
  const ConstMatMap<T> w(weights.ptr(), inc, rows);
  AccMat col(rows, cols);
  std::vector<double> acc(spec.channels * g.in_h * g.in_w);
  for (std::size_t n = 0; n < is.n; ++n) {
    col.noalias() = w.template cast<double>().transpose() *
                    ConstMatMap<T>(input.plane(n, 0), inc, cols).template cast<double>();
    std::fill(acc.begin(), acc.end(), 0.0);
    detail::col2im(col.data(), g, acc.data());
    std::copy(acc.begin(), acc.end(), out.plane(n, 0));
  }
  return out;
}

template <typename T>
DeconvGrads<T> deconv_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               const DeconvSpec& spec, const BasicTensor<T>& grad_out) {
  const Shape4& is = input.shape();
  check_deconv(is, weights.shape(), spec);
  const detail::Window g = deconv_window(is, spec);
  require_same_shape(grad_out.shape(), Shape4{is.n, spec.channels, g.in_h, g.in_w},
                     "deconv_backward grad_out");
  DeconvGrads<T> grads{BasicTensor<T>(is), BasicTensor<T>(weights.shape())};
  const std::size_t k = spec.kernel;
  const std::size_t s = spec.stride;

  if (spec.classwise) {
    std::vector<double> gw(is.c * k * k, 0.0);
    for (std::size_t n = 0; n < is.n; ++n) {
      for (std::size_t c = 0; c < is.c; ++c) {
        const T* in = input.plane(n, c);
        const T* go = grad_out.plane(n, c);
        const T* w = weights.ptr() + weights.index(c, c, 0, 0);
        double* gwc = gw.data() + c * k * k;
        T* gi = grads.input.plane(n, c);
        for (std::size_t y = 0; y < is.h; ++y) {
          for (std::size_t x = 0; x < is.w; ++x) {
            const double v = in[y * is.w + x];
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
              const T* grow = go + (y * s + i) * g.in_w + x * s;
              for (std::size_t j = 0; j < k; ++j) {
                acc += static_cast<double>(grow[j]) * w[i * k + j];
                gwc[i * k + j] += v * grow[j];
              }
            }
            gi[y * is.w + x] = static_cast<T>(acc);
          }
        }
      }
    }
    for (std::size_t c = 0; c < is.c; ++c) {
      T* dst = grads.weights.ptr() + grads.weights.index(c, c, 0, 0);
      for (std::size_t i = 0; i < k * k; ++i) dst[i] = static_cast<T>(gw[c * k * k + i]);
    }
    return grads;
  }

  const auto rows = static_cast<Eigen::Index>(g.col_rows());
  const auto cols = static_cast<Eigen::Index>(g.col_cols());
  const auto inc = static_cast<Eigen::Index>(is.c);
  const ConstMatMap<T> w(weights.ptr(), inc, rows);
  AccMat gw = AccMat::Zero(inc, rows);
  std::vector<T> col(g.col_rows() * g.col_cols());
  for (std::size_t n = 0; n < is.n; ++n) {
    detail::im2col(grad_out.plane(n, 0), g, col.data());
    const ConstMatMap<T> cm(col.data(), rows, cols);
    const ConstMatMap<T> x(input.plane(n, 0), inc, cols);
    assign_product(MatMap<T>(grads.input.plane(n, 0), inc, cols), w, cm);
    gw.noalias() += x.template cast<double>() * cm.template cast<double>().transpose();
  }
  MatMap<T>(grads.weights.ptr(), inc, rows) = gw.template cast<T>();
  return grads;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> crop_center(const BasicTensor<T>& input, std::size_t target_h,
                           std::size_t target_w) {
  const Shape4& is = input.shape();
  if (target_h > is.h || target_w > is.w || target_h == 0 || target_w == 0) {
    throw ShapeError("cannot crop " + is.str() + " to " + std::to_string(target_h) + "x" +
                     std::to_string(target_w));
  }
  const std::size_t oy = crop_offset(is.h, target_h);
  const std::size_t ox = crop_offset(is.w, target_w);
  BasicTensor<T> out(Shape4{is.n, is.c, target_h, target_w});
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      for (std::size_t y = 0; y < target_h; ++y) {
        const T* src = input.ptr() + input.index(n, c, y + oy, ox);
        std::copy(src, src + target_w, out.ptr() + out.index(n, c, y, 0));
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> crop_backward(const Shape4& input_shape, const BasicTensor<T>& grad_out) {
  const Shape4& gs = grad_out.shape();
  if (gs.n != input_shape.n || gs.c != input_shape.c || gs.h > input_shape.h ||
      gs.w > input_shape.w) {
    throw ShapeError("crop_backward: " + gs.str() + " is not a crop of " + input_shape.str());
  }
  const std::size_t oy = crop_offset(input_shape.h, gs.h);
  const std::size_t ox = crop_offset(input_shape.w, gs.w);
  BasicTensor<T> g(input_shape);
  for (std::size_t n = 0; n < gs.n; ++n) {
    for (std::size_t c = 0; c < gs.c; ++c) {
      for (std::size_t y = 0; y < gs.h; ++y) {
        const T* src = grad_out.ptr() + grad_out.index(n, c, y, 0);
        std::copy(src, src + gs.w, g.ptr() + g.index(n, c, y + oy, ox));
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> sum_forward(std::span<const BasicTensor<T>* const> inputs,
                           std::span<const double> scales) {
  if (inputs.empty()) throw ShapeError("sum needs at least one input");
  if (scales.size() != inputs.size()) {
    throw ShapeError("sum has " + std::to_string(inputs.size()) + " inputs but " +
                     std::to_string(scales.size()) + " scales");
  }
  BasicTensor<T> out(inputs[0]->shape());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    require_same_shape(inputs[k]->shape(), out.shape(), "sum");
    const T s = static_cast<T>(scales[k]);
    const BasicTensor<T>& in = *inputs[k];
    if (s == T(1)) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * in[i];
    }
  }
  return out;
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& input, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout rate must lie in [0, 1)");
  DropoutResult<T> r{BasicTensor<T>(input.shape()), BasicTensor<T>(input.shape(), T(1))};
  if (rate > 0.0) {
    Rng rng(seed);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < input.size(); ++i) {
      r.mask[i] = rng.uniform() < rate ? T(0) : keep_scale;
    }
  }
  for (std::size_t i = 0; i < input.size(); ++i) r.output[i] = input[i] * r.mask[i];
  return r;
}

// ---------------------------------------------------------------------------

template <typename T>
LossResult<T> softmax_xent_loss(const BasicTensor<T>& logits, const LabelMap& labels,
                                std::uint16_t ignore_label) {
  const Shape4& s = logits.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w || labels.size() != s.n * s.h * s.w) {
    throw ShapeError("labels " + dims(labels.n, 1, labels.h, labels.w) +
                     " do not match logits " + s.str());
  }
  std::size_t counted = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint16_t l = labels.labels[i];
    if (l == ignore_label) continue;
    if (l >= s.c) {
      throw DataError("label " + std::to_string(l) + " at pixel " + std::to_string(i) +
                      " out of range for " + std::to_string(s.c) + " classes");
    }
    ++counted;
  }
  if (counted == 0) throw DataError("softmax loss: every pixel is ignored");

  LossResult<T> r{0.0, BasicTensor<T>(s), counted};
  const std::size_t hw = s.h * s.w;
  const double inv = 1.0 / static_cast<double>(counted);
  std::vector<double> prob(s.c);
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z = logits.plane(n, 0);
    T* g = r.grad_logits.plane(n, 0);
    for (std::size_t p = 0; p < hw; ++p) {
      const std::uint16_t l = labels.labels[n * hw + p];
      if (l == ignore_label) continue;
      double zmax = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) zmax = std::max(zmax, static_cast<double>(z[c * hw + p]));
      double denom = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        prob[c] = std::exp(static_cast<double>(z[c * hw + p]) - zmax);
        denom += prob[c];
      }
      total += std::log(denom) - (static_cast<double>(z[l * hw + p]) - zmax);
      for (std::size_t c = 0; c < s.c; ++c) {
        const double onehot = c == l ? 1.0 : 0.0;
        g[c * hw + p] = static_cast<T>((prob[c] / denom - onehot) * inv);
      }
    }
  }
  r.loss = total * inv;
  if (!std::isfinite(r.loss)) throw NumericError("softmax loss is not finite");
  return r;
}

template <typename T>
LossResult<T> squared_error_loss(const BasicTensor<T>& output, const BasicTensor<T>& target) {
  require_same_shape(output.shape(), target.shape(), "squared_error_loss");
  LossResult<T> r{0.0, BasicTensor<T>(output.shape()), output.size()};
  double total = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = static_cast<double>(output[i]) - static_cast<double>(target[i]);
    total += d * d;
    r.grad_logits[i] = static_cast<T>(d);
  }
  r.loss = 0.5 * total;
  return r;
}

#define DILFCN_INSTANTIATE(T)                                                                 \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         std::span<const T>, const ConvSpec&);                \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                        const ConvSpec&, const BasicTensor<T>&);              \
  template PoolResult<T> maxpool_forward(const BasicTensor<T>&, const PoolSpec&);             \
  template BasicTensor<T> maxpool_backward(const Shape4&, std::span<const std::size_t>,       \
                                           const BasicTensor<T>&);                            \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> make_bilinear_kernel<T>(std::size_t, std::size_t, bool);            \
  template BasicTensor<T> deconv_forward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                         const DeconvSpec&);                                  \
  template DeconvGrads<T> deconv_backward(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                          const DeconvSpec&, const BasicTensor<T>&);          \
  template BasicTensor<T> crop_center(const BasicTensor<T>&, std::size_t, std::size_t);       \
  template BasicTensor<T> crop_backward(const Shape4&, const BasicTensor<T>&);                \
  template BasicTensor<T> sum_forward(std::span<const BasicTensor<T>* const>,                 \
                                      std::span<const double>);                               \
  template DropoutResult<T> dropout_forward(const BasicTensor<T>&, double, std::uint64_t);    \
  template LossResult<T> softmax_xent_loss(const BasicTensor<T>&, const LabelMap&,            \
                                           std::uint16_t);                                    \
  template LossResult<T> squared_error_loss(const BasicTensor<T>&, const BasicTensor<T>&);

DILFCN_INSTANTIATE(float)
DILFCN_INSTANTIATE(double)

#undef DILFCN_INSTANTIATE

}  // namespace dilfcn
