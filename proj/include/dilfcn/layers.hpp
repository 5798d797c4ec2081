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
#include <functional>
#include <span>
#include <vector>

#include "dilfcn/tensor.hpp"

namespace dilfcn {

/// Square convolution with optional dilation. Weights are laid out
/// [out_channels, in_channels, kernel, kernel].
struct ConvSpec {
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t dilation = 1;
  bool has_bias = true;

  /// Spatial extent covered by the dilated kernel: K + (K-1)(d-1).
  std::size_t effective_kernel() const noexcept {
    return kernel + (kernel - 1) * (dilation - 1);
  }
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct PoolSpec {
  std::size_t kernel = 2;
  std::size_t stride = 2;

  void validate() const;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

/// Transposed convolution (upsampling by `stride`). Weights are laid out
/// [in_channels, channels, kernel, kernel], i.e. the weight tensor of the
/// convolution this layer is the adjoint of. A classwise deconvolution only
/// reads the diagonal (c, c) kernels and requires in_channels == channels.
struct DeconvSpec {
  std::size_t channels = 1;
  std::size_t kernel = 4;
  std::size_t stride = 2;
  bool frozen = true;
  bool classwise = true;

  void validate() const;
  friend bool operator==(const DeconvSpec&, const DeconvSpec&) = default;
};

/// Per-pixel class indices, row-major (n, h, w).
struct LabelMap {
  std::size_t n = 1;
  std::size_t h = 1;
  std::size_t w = 1;
  std::vector<std::uint16_t> labels;

  LabelMap() : labels(1, 0) {}
  LabelMap(std::size_t n_, std::size_t h_, std::size_t w_, std::uint16_t fill = 0)
      : n(n_), h(h_), w(w_), labels(n_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return labels.size(); }
  std::uint16_t& at(std::size_t b, std::size_t y, std::size_t x) noexcept {
    return labels[(b * h + y) * w + x];
  }
  std::uint16_t at(std::size_t b, std::size_t y, std::size_t x) const noexcept {
    return labels[(b * h + y) * w + x];
  }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

inline constexpr std::uint16_t kIgnoreLabel = 255;

// ---------------------------------------------------------------------------
// Convolution

/// Output extent of a strided, padded, dilated window along one axis.
/// Throws ShapeError when the effective kernel exceeds the padded input.
std::size_t conv_output_extent(std::size_t in, std::size_t pad, std::size_t kernel,
                               std::size_t stride, std::size_t dilation);

/// out[n,o,y,x] = bias[o] + sum_{c,i,j} w[o,c,i,j] * in_pad[n,c,y*S+i*d,x*S+j*d].
/// An empty `bias` span means no bias.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              std::span<const T> bias, const ConvSpec& spec);

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;  // (out_channels,1,1,1); zeros when the layer has no bias
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const ConvSpec& spec, const BasicTensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Max pooling

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  /// Flat input index of the winning element for each output element.
  std::vector<std::size_t> argmax;
};

/// Ties resolve to the first element in a row-major scan of the window.
template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& input, const PoolSpec& spec);

template <typename T>
BasicTensor<T> maxpool_backward(const Shape4& input_shape, std::span<const std::size_t> argmax,
                                const BasicTensor<T>& grad_out);

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

/// grad_in[i] = grad_out[i] if input[i] > 0, else 0 (including input == 0).
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Bilinear transposed convolution

/// 1-D bilinear interpolation profile of length `kernel`.
std::vector<double> bilinear_profile(std::size_t kernel);

/// (channels, channels, kernel, kernel) bilinear upsampling weights. Classwise
/// kernels sit on the (c, c) diagonal with zeros elsewhere; otherwise every
/// (in, out) pair carries the same 2-D kernel.
template <typename T = float>
BasicTensor<T> make_bilinear_kernel(std::size_t kernel, std::size_t channels, bool classwise);

template <typename T>
BasicTensor<T> deconv_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const DeconvSpec& spec);

template <typename T>
struct DeconvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
};

template <typename T>
DeconvGrads<T> deconv_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               const DeconvSpec& spec, const BasicTensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Crop, fusion, dropout

/// Leading offset of a centered crop; odd margins put the extra pixel last.
inline std::size_t crop_offset(std::size_t in, std::size_t target) noexcept {
  return (in - target) / 2;
}

template <typename T>
BasicTensor<T> crop_center(const BasicTensor<T>& input, std::size_t target_h,
                           std::size_t target_w);

/// Scatters grad_out back into a zero tensor of the uncropped shape.
template <typename T>
BasicTensor<T> crop_backward(const Shape4& input_shape, const BasicTensor<T>& grad_out);

/// out = sum_i scales[i] * inputs[i].
template <typename T>
BasicTensor<T> sum_forward(std::span<const BasicTensor<T>* const> inputs,
                           std::span<const double> scales);

template <typename T>
struct DropoutResult {
  BasicTensor<T> output;
  BasicTensor<T> mask;  // 0 or 1/(1-rate)
};

/// Inverted dropout; rate 0 is the identity.
template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& input, double rate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Losses

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad_logits;
  std::size_t counted_pixels = 0;
};

/// Mean per-pixel softmax cross-entropy over pixels whose label is not
/// `ignore_label`.
template <typename T>
LossResult<T> softmax_xent_loss(const BasicTensor<T>& logits, const LabelMap& labels,
                                std::uint16_t ignore_label = kIgnoreLabel);

/// 0.5 * sum (output - target)^2.
template <typename T>
LossResult<T> squared_error_loss(const BasicTensor<T>& output, const BasicTensor<T>& target);

}  // namespace dilfcn
