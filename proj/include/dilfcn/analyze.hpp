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
#include <span>
#include <string>
#include <vector>

#include "dilfcn/graph.hpp"

namespace dilfcn {

/// K + (K-1)(d-1): the window a K-tap kernel with dilation d spans.
std::size_t effective_kernel(std::size_t kernel, std::size_t dilation);

struct ExtentResult {
  std::size_t extent = 0;
  /// False when (I + 2P - K') is not a multiple of S and the floor dropped pixels.
  bool exact = true;
};

/// floor((I + 2P - K') / S) + 1. Throws ShapeError if K' > I + 2P or S == 0.
ExtentResult output_extent(std::size_t in, std::size_t pad, std::size_t kernel,
                           std::size_t stride, std::size_t dilation);

struct ChainLayer {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
};

struct RfStep {
  std::size_t rf = 1;
  std::size_t jump = 1;
};

/// Receptive field and jump after each layer, starting from r = 1, jump = 1:
///   r_out = r_in + (K' - 1) * jump_in,  jump_out = jump_in * S.
std::vector<RfStep> receptive_field_chain(std::span<const ChainLayer> layers);

/// The doubling recurrence r_n = 2 r_{n-1} + 1. It agrees with the
/// propagation rule for a 3x3 stride-1 layer only when jump_in equals
/// (r_{n-1} + 1) / 2, which is why stacked 3x3 convolutions grow 3, 5, 7...
/// rather than 3, 7, 15.
std::size_t doubling_receptive_field(std::size_t previous);

/// 2^(i+2) - 1: receptive field after i+1 3x3 layers with dilations 1, 2, 4, ...
/// Throws Error if the result does not fit in std::size_t.
std::size_t exp_dilation_rf(std::size_t i);

struct LayerParams {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  std::size_t weights = 0;
  std::size_t bias = 0;
  bool frozen = false;
  std::size_t total() const noexcept { return weights + bias; }
};

struct ParamCount {
  std::size_t total = 0;
  /// Portion of `total` held by frozen blobs (bilinear deconvolutions).
  std::size_t frozen = 0;
  std::vector<LayerParams> per_layer;  // learnable layers only

  const LayerParams& layer(std::string_view name) const;
};

ParamCount count_parameters(const Graph& graph);

struct ParamGroup {
  std::string name;
  std::size_t params = 0;
};

/// Totals for backbone convolutions, fc6, fc7, score heads and upsampling.
std::vector<ParamGroup> param_groups(const Graph& graph, const ParamCount& count);

enum class MemoryMode { Inference, Training };

inline constexpr std::size_t kBytesPerElement = 4;

struct LayerAnalysis {
  std::string name;
  LayerKind kind = LayerKind::Input;
  Shape4 out_shape;
  std::size_t effective_kernel = 1;
  std::size_t receptive_field = 1;
  std::size_t jump = 1;
  std::size_t weights = 0;
  std::size_t bias = 0;
  std::size_t params = 0;
  std::size_t activation_bytes = 0;
};

struct AnalysisReport {
  Shape4 input;
  std::vector<LayerAnalysis> layers;
  std::size_t total_params = 0;
  std::size_t frozen_params = 0;
  std::size_t total_activation_bytes = 0;
  std::size_t est_inference_bytes = 0;
  std::size_t est_train_bytes = 0;
  std::vector<std::string> warnings;

  const LayerAnalysis& layer(std::string_view name) const;
};

/// Static per-layer shapes, receptive fields, parameter and memory accounting.
AnalysisReport analyze(const Graph& graph, const Shape4& input);

struct MemoryEstimate {
  std::size_t activation_bytes = 0;
  std::size_t param_bytes = 0;
  std::size_t total_bytes = 0;
};

/// Inference: activations + weights. Training: activations and their
/// gradients + weights, weight gradients and momentum. 4 bytes per element.
MemoryEstimate estimate_memory(const Graph& graph, const Shape4& input, MemoryMode mode);

std::string format_report(const AnalysisReport& report, MemoryMode mode);
/// `layer,out_n,out_c,out_h,out_w,k_eff,rf,jump,params,act_bytes`
std::string report_csv(const AnalysisReport& report);

struct LayerDiff {
  std::string name;
  std::size_t params_a = 0;
  std::size_t params_b = 0;
};

struct Comparison {
  std::size_t total_params_a = 0, total_params_b = 0;
  double param_ratio = 0.0;  // a / b
  std::size_t fc6_weights_a = 0, fc6_weights_b = 0;
  std::size_t fc6_params_a = 0, fc6_params_b = 0;
  std::size_t train_bytes_a = 0, train_bytes_b = 0;
  std::size_t inference_bytes_a = 0, inference_bytes_b = 0;
  /// Layers whose parameter counts differ, plus layers present in only one graph.
  std::vector<LayerDiff> layer_diffs;
};

Comparison compare(const Graph& a, const Graph& b, const Shape4& input);
std::string format_comparison(const Comparison& c);
/// `metric,a,b` rows followed by `param_ratio,<3 decimals>`.
std::string comparison_csv(const Comparison& c);

}  // namespace dilfcn
