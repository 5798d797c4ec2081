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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dilfcn/layers.hpp"
#include "dilfcn/tensor.hpp"

namespace dilfcn {

enum class LayerKind { Input, Conv, Relu, Pool, Deconv, Sum, Crop, Dropout };

std::string_view kind_name(LayerKind kind) noexcept;
std::optional<LayerKind> parse_kind(std::string_view name) noexcept;

/// How a convolution's weights are initialized. Skip score heads start at zero.
enum class WeightInit { Xavier, Zero };

struct InputParams {
  std::size_t channels = 3;
  friend bool operator==(const InputParams&, const InputParams&) = default;
};

/// Per-bottom scale constants; empty means 1.0 for every bottom.
struct SumParams {
  std::vector<double> scales;
  friend bool operator==(const SumParams&, const SumParams&) = default;
};

struct DropoutParams {
  double rate = 0.5;
  friend bool operator==(const DropoutParams&, const DropoutParams&) = default;
};

struct LayerSpec {
  using Params = std::variant<std::monostate, InputParams, ConvSpec, PoolSpec, DeconvSpec,
                              SumParams, DropoutParams>;

  std::string name;
  LayerKind kind = LayerKind::Relu;
  std::vector<std::string> bottoms;
  Params params;
  WeightInit init = WeightInit::Xavier;

  static LayerSpec input(std::string name, std::size_t channels);
  static LayerSpec conv(std::string name, std::string bottom, const ConvSpec& spec,
                        WeightInit init = WeightInit::Xavier);
  static LayerSpec relu(std::string name, std::string bottom);
  static LayerSpec pool(std::string name, std::string bottom, const PoolSpec& spec);
  static LayerSpec deconv(std::string name, std::string bottom, const DeconvSpec& spec);
  static LayerSpec sum(std::string name, std::vector<std::string> bottoms,
                       std::vector<double> scales = {});
  /// Crops `bottom` to the spatial extent of `reference`.
  static LayerSpec crop(std::string name, std::string bottom, std::string reference);
  static LayerSpec dropout(std::string name, std::string bottom, double rate);

  const ConvSpec& conv_spec() const { return std::get<ConvSpec>(params); }
  const PoolSpec& pool_spec() const { return std::get<PoolSpec>(params); }
  const DeconvSpec& deconv_spec() const { return std::get<DeconvSpec>(params); }
  const InputParams& input_params() const { return std::get<InputParams>(params); }
  const DropoutParams& dropout_params() const { return std::get<DropoutParams>(params); }
  /// Scale for each bottom, defaulting to 1.0.
  std::vector<double> sum_scales() const;

  bool learnable() const noexcept {
    return kind == LayerKind::Conv || kind == LayerKind::Deconv;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Blob naming: "<layer>.w" for weights and "<layer>.b" for biases.
std::string weight_blob(std::string_view layer);
std::string bias_blob(std::string_view layer);

struct BlobInfo {
  std::string name;
  Shape4 shape;
  std::size_t layer = 0;
  bool frozen = false;
  bool is_bias = false;
};

/// Declarative layer DAG. Layers are kept in declaration order, which is a
/// topological order because bottoms must be declared before use.
class Graph {
 public:
  Graph() = default;

  /// Appends a layer. The first layer must be the (single) input layer.
  /// Throws GraphError on duplicate names, unknown bottoms or bad arity.
  void add(LayerSpec layer);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  const LayerSpec& layer(std::string_view name) const { return layers_.at(index_of(name)); }
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  const std::vector<std::size_t>& bottoms(std::size_t i) const { return bottoms_.at(i); }
  std::vector<std::vector<std::size_t>> consumers() const;

  /// Index of the unique layer without consumers. Throws GraphError when
  /// there is none or more than one.
  std::size_t output_index() const;

  /// Checks every structural invariant plus channel consistency.
  void validate() const;

  /// Output channel count of every layer.
  std::vector<std::size_t> channels() const;
  std::size_t input_channels() const;
  std::size_t output_channels() const { return channels()[output_index()]; }

  /// Output shape of every layer for the given input, or ShapeError naming
  /// the first layer whose geometry fails.
  std::vector<Shape4> infer_shapes(const Shape4& input) const;

  /// Largest cumulative downsampling factor; input extents must be divisible by it.
  std::size_t required_divisor() const;

  std::size_t count(LayerKind kind) const;

  /// Every learnable blob with its expected shape, in layer order.
  std::vector<BlobInfo> blobs() const;

  friend bool operator==(const Graph& a, const Graph& b) { return a.layers_ == b.layers_; }

 private:
  std::vector<LayerSpec> layers_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> bottoms_;
};

// ---------------------------------------------------------------------------
// Architecture spec text format

/// Parses the line-oriented architecture format. Errors carry line numbers.
Graph parse_spec(std::string_view text);
std::string dump_spec(const Graph& graph);
Graph load_spec(const std::filesystem::path& path);
void save_spec(const Graph& graph, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Builders

enum class Family { Fcn8sVgg16Baseline, DilatedFcn2sVgg16, DilatedFcn2sVgg19 };

/// Accepts "fcn8s-vgg16", "dilated-fcn2s-vgg16", "dilated-fcn2s-vgg19" and the
/// underscore spellings (including "fcn8s_vgg16_baseline").
std::optional<Family> parse_family(std::string_view name) noexcept;
std::string_view family_name(Family family) noexcept;

struct BuildOptions {
  /// Divides every backbone and Fc channel count (1 = reference widths).
  std::size_t width_divisor = 1;
  /// Inverted dropout after relu6/relu7; 0 disables (no layers emitted).
  double dropout = 0.0;
  /// Scale constants for the pool4, pool3, pool2, pool1 skips (in that order).
  std::array<double, 4> skip_scales{1.0, 1.0, 1.0, 1.0};
  std::size_t input_channels = 3;
};

Graph build_architecture(Family family, std::size_t num_classes, const BuildOptions& options = {});

// ---------------------------------------------------------------------------
// Weights

template <typename T>
using BasicWeightStore = std::map<std::string, BasicTensor<T>>;
using WeightStore = BasicWeightStore<float>;
using WeightStore64 = BasicWeightStore<double>;

template <typename U, typename T>
BasicWeightStore<U> cast_store(const BasicWeightStore<T>& store) {
  BasicWeightStore<U> out;
  for (const auto& [name, t] : store) out.emplace(name, t.template cast<U>());
  return out;
}

std::size_t total_elements(const WeightStore& store);

/// Xavier-uniform convolutions with zero biases, zeroed skip heads and
/// bilinear deconvolutions. Deterministic in `seed`.
WeightStore init_weights(const Graph& graph, std::uint64_t seed);

/// Throws GraphError if a blob is missing or has the wrong shape.
template <typename T>
void check_weights(const Graph& graph, const BasicWeightStore<T>& weights);

// ---------------------------------------------------------------------------
// Execution

enum class Mode { Inference, Train };

struct ForwardOptions {
  Mode mode = Mode::Train;
  std::uint64_t dropout_seed = 0;
  /// When false, intermediate activations are released as soon as their
  /// consumers have run; the returned cache is then unusable for backward.
  bool keep_cache = true;
};

template <typename T>
struct ActivationCache {
  std::vector<BasicTensor<T>> outputs;
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<BasicTensor<T>> masks;
  Shape4 input_shape;
  bool complete = false;
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> output;
  ActivationCache<T> cache;
};

/// Executes the graph in declaration order. Throws ShapeError when the input
/// extent is not divisible by required_divisor().
template <typename T>
ForwardResult<T> forward(const Graph& graph, const BasicWeightStore<T>& weights,
                         const BasicTensor<T>& input, const ForwardOptions& options = {});

/// Recomputes layers first_layer.. in place on a complete cache (layers
/// declared earlier are left as they are) and returns the new output.
template <typename T>
BasicTensor<T> forward_from(const Graph& graph, const BasicWeightStore<T>& weights,
                            ActivationCache<T>& cache, std::size_t first_layer,
                            const ForwardOptions& options = {});

/// Gradients for every learnable, unfrozen blob (zero-filled when no
/// gradient reaches a blob). Frozen blobs get no entry.
template <typename T>
BasicWeightStore<T> backward(const Graph& graph, const BasicWeightStore<T>& weights,
                             const ActivationCache<T>& cache, const BasicTensor<T>& grad_output);

// ---------------------------------------------------------------------------
// Weight file: "DFKW", u16 version 1, u32 blob count, then per blob
// u16 name length, name bytes, u8 ndim, ndim x u32 extents, f32 values.
// All little-endian, no padding.

std::vector<std::uint8_t> encode_weights(const WeightStore& store);
/// Throws ParseError with the byte offset of the first malformed field.
WeightStore decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

struct ImportReport {
  WeightStore store;
  std::vector<std::string> copied;
  /// "target <- donor: shape vs shape" for blobs left untouched.
  std::vector<std::string> mismatches;
};

/// Copies donor blobs into `store` under name_map (target -> donor). Blobs
/// whose shapes differ are reported and left as they were. Throws DataError
/// when a mapped donor blob is missing.
ImportReport import_named_weights(const WeightStore& store, const WeightStore& donor,
                                  const std::map<std::string, std::string>& name_map);

}  // namespace dilfcn
