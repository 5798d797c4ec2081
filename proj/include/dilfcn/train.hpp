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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dilfcn/graph.hpp"
#include "dilfcn/image_io.hpp"
#include "dilfcn/metrics.hpp"

namespace dilfcn {

struct TrainConfig {
  std::size_t iterations = 0;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  /// A history entry every log_every iterations (and after the last one).
  std::size_t log_every = 10;

  void validate() const;
};

/// v <- momentum * v + g; w <- w - lr * v for every blob in `grads`.
/// Missing velocity entries start at zero. Throws ShapeError on mismatch
/// and GraphError when a gradient names an unknown blob.
template <typename T>
void sgd_step(BasicWeightStore<T>& weights, const BasicWeightStore<T>& grads,
              BasicWeightStore<T>& velocity, double lr, double momentum);

struct Sample {
  std::string stem;
  Tensor image;  // (1, 3, H, W)
  LabelMap labels;
};

using Dataset = std::vector<Sample>;

/// Pairs images/<stem>.ppm with labels/<stem>.pgm, sorted by stem.
Dataset load_dataset(const std::filesystem::path& dir);

struct HistoryEntry {
  std::size_t iteration = 0;
  /// Mean of the batch losses since the previous entry.
  double loss = 0.0;
};

struct TrainResult {
  WeightStore weights;
  std::vector<HistoryEntry> history;
};

/// SGD with momentum on mean per-pixel softmax cross-entropy. Each epoch
/// visits the dataset in an order drawn from `config.seed`; samples of a
/// batch are stacked and must share a shape.
TrainResult train_loop(const Graph& graph, const WeightStore& weights, const Dataset& dataset,
                       const TrainConfig& config);

/// `iteration,loss`.
std::string history_csv(const std::vector<HistoryEntry>& history);

/// Per-pixel argmax over channels; ties go to the lower class index.
LabelMap argmax_labels(const Tensor& scores);

/// Inference-mode forward plus argmax for a (1, C, H, W) image whose
/// extents need not be multiples of the graph's divisor: the image is
/// reflection-padded at the bottom and right and the labels cropped back.
LabelMap predict(const Graph& graph, const WeightStore& weights, const Tensor& image);

/// Reflection padding at the bottom and right up to multiples of `divisor`.
Tensor reflect_pad(const Tensor& image, std::size_t divisor);

/// Mean over samples of the per-image mean cross-entropy.
double dataset_loss(const Graph& graph, const WeightStore& weights, const Dataset& dataset);

ConfusionMatrix evaluate(const Graph& graph, const WeightStore& weights, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Finite-difference gradient check

enum class LossKind { SoftmaxXent, SquaredError };

struct GradcheckSample {
  Tensor64 input;
  LabelMap labels;    // SoftmaxXent
  Tensor64 target;    // SquaredError
};

/// Normal(0, 1) input, uniform labels over the output classes and a
/// Normal(0, 1) regression target of the output shape.
GradcheckSample make_gradcheck_sample(const Graph& graph, std::size_t height, std::size_t width,
                                      std::uint64_t seed);

/// A point away from the degenerate parts of the default initialization:
/// He-scaled normal weights, biases uniform in [-0.1, 0.1] and random skip
/// heads, so activations stay O(1) through depth and ReLU inputs avoid
/// exact zeros. Frozen blobs keep their bilinear kernels.
WeightStore64 gradcheck_weights(const Graph& graph, std::uint64_t seed);

struct GradcheckOptions {
  double eps = 1e-5;
  /// 32: analytic gradient evaluated in float; 64: in double. The
  /// central-difference reference is always evaluated in double at the
  /// same (float-representable, for 32) weights.
  int precision = 64;
  LossKind loss = LossKind::SoftmaxXent;
  std::size_t samples_per_blob = 50;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_blob;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-12) over sampled coordinates of
/// every unfrozen blob.
GradcheckResult gradcheck(const Graph& graph, const WeightStore64& weights,
                          const GradcheckSample& sample, const GradcheckOptions& options = {});

// ---------------------------------------------------------------------------
// Synthetic dataset

struct SynthConfig {
  std::size_t num_images = 0;
  std::size_t size = 64;
  std::size_t num_classes = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Base colour of a class in [0, 1]^3.
std::array<double, 3> class_color(std::size_t cls);

/// One image/label pair; image `index` of a set depends only on (seed, index).
std::pair<RgbImage, GrayImage> synth_pair(const SynthConfig& config, std::size_t index);

/// Writes images/<stem>.ppm and labels/<stem>.pgm with stems img_00000...
void synth_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace dilfcn
