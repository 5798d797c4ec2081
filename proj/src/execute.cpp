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

#include <optional>

#include "dilfcn/graph.hpp"

namespace dilfcn {

namespace {

template <typename T>
void accumulate(std::optional<BasicTensor<T>>& slot, BasicTensor<T>&& g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  require_same_shape(slot->shape(), g.shape(), "gradient accumulation");
  for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
}

constexpr std::uint64_t kDropoutStream = 0x9E3779B97F4A7C15ull;

template <typename T>
void run_layer(const Graph& graph, const BasicWeightStore<T>& weights, ActivationCache<T>& cache,
               std::size_t i, const ForwardOptions& options) {
  const LayerSpec& l = graph.layer(i);
  const auto& b = graph.bottoms(i);
  auto& out = cache.outputs[i];
  switch (l.kind) {
    case LayerKind::Input:
      break;
    case LayerKind::Conv: {
      const ConvSpec& spec = l.conv_spec();
      std::span<const T> bias;
      if (spec.has_bias) bias = weights.at(bias_blob(l.name)).data();
      out = conv2d_forward(cache.outputs[b[0]], weights.at(weight_blob(l.name)), bias, spec);
      break;
    }
    case LayerKind::Relu:
      out = relu_forward(cache.outputs[b[0]]);
      break;
    case LayerKind::Pool: {
      PoolResult<T> r = maxpool_forward(cache.outputs[b[0]], l.pool_spec());
      out = std::move(r.output);
      if (options.keep_cache) cache.argmax[i] = std::move(r.argmax);
      break;
    }
    case LayerKind::Deconv:
      out = deconv_forward(cache.outputs[b[0]], weights.at(weight_blob(l.name)), l.deconv_spec());
      break;
    case LayerKind::Sum: {
      std::vector<const BasicTensor<T>*> in;
      for (std::size_t k : b) in.push_back(&cache.outputs[k]);
      const std::vector<double> scales = l.sum_scales();
      out = sum_forward<T>(in, scales);
      break;
    }
    case LayerKind::Crop: {
      const Shape4& ref = cache.outputs[b[1]].shape();
      out = crop_center(cache.outputs[b[0]], ref.h, ref.w);
      break;
    }
    case LayerKind::Dropout:
      if (options.mode == Mode::Train) {
        DropoutResult<T> r = dropout_forward(cache.outputs[b[0]], l.dropout_params().rate,
                                             options.dropout_seed + kDropoutStream * (i + 1));
        out = std::move(r.output);
        if (options.keep_cache) cache.masks[i] = std::move(r.mask);
      } else {
        out = cache.outputs[b[0]];
      }
      break;
  }
  ensure_finite(out, "output of layer '" + l.name + "'");
}

template <typename T>
void check_input(const Graph& graph, const Shape4& is) {
  const std::size_t div = graph.required_divisor();
  if (is.h % div != 0 || is.w % div != 0) {
    throw ShapeError("input extent " + std::to_string(is.h) + "x" + std::to_string(is.w) +
                     " is not divisible by " + std::to_string(div) +
                     "; pad the input to a multiple of " + std::to_string(div));
  }
  graph.infer_shapes(is);
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const Graph& graph, const BasicWeightStore<T>& weights,
                         const BasicTensor<T>& input, const ForwardOptions& options) {
  graph.validate();
  check_weights(graph, weights);
  check_input<T>(graph, input.shape());
  ensure_finite(input, "network input");

  const std::size_t n = graph.size();
  ForwardResult<T> result;
  ActivationCache<T>& cache = result.cache;
  cache.outputs.resize(n);
  cache.argmax.resize(n);
  cache.masks.resize(n);
  cache.input_shape = input.shape();
  cache.outputs[0] = input;

  const auto consumers = graph.consumers();
  std::vector<std::size_t> pending(n);
  for (std::size_t i = 0; i < n; ++i) pending[i] = consumers[i].size();
  const std::size_t out_idx = graph.output_index();

  for (std::size_t i = 1; i < n; ++i) {
    run_layer(graph, weights, cache, i, options);
    if (!options.keep_cache) {
      for (std::size_t k : graph.bottoms(i)) {
        if (--pending[k] == 0 && k != out_idx) cache.outputs[k] = BasicTensor<T>();
      }
    }
  }
  result.output = cache.outputs[out_idx];
  cache.complete = options.keep_cache;
  return result;
}

template <typename T>
BasicTensor<T> forward_from(const Graph& graph, const BasicWeightStore<T>& weights,
                            ActivationCache<T>& cache, std::size_t first_layer,
                            const ForwardOptions& options) {
  if (!cache.complete || cache.outputs.size() != graph.size()) {
    throw GraphError("forward_from needs a complete activation cache of this graph");
  }
  ForwardOptions opts = options;
  opts.keep_cache = true;
  for (std::size_t i = std::max<std::size_t>(first_layer, 1); i < graph.size(); ++i) {
    run_layer(graph, weights, cache, i, opts);
  }
  return cache.outputs[graph.output_index()];
}

template <typename T>
BasicWeightStore<T> backward(const Graph& graph, const BasicWeightStore<T>& weights,
                             const ActivationCache<T>& cache, const BasicTensor<T>& grad_output) {
  const std::size_t n = graph.size();
  if (!cache.complete || cache.outputs.size() != n) {
    throw GraphError("activation cache does not come from a caching forward of this graph");
  }
  check_weights(graph, weights);
  const std::size_t out_idx = graph.output_index();
  require_same_shape(grad_output.shape(), cache.outputs[out_idx].shape(), "backward grad_output");
  ensure_finite(grad_output, "backward grad_output");

  BasicWeightStore<T> grads;
  for (const BlobInfo& blob : graph.blobs()) {
    if (!blob.frozen) grads.emplace(blob.name, BasicTensor<T>(blob.shape));
  }

  std::vector<std::optional<BasicTensor<T>>> g(n);
  g[out_idx] = grad_output;
  for (std::size_t i = n; i-- > 1;) {
    if (!g[i]) continue;
    const BasicTensor<T> go = std::move(*g[i]);
    g[i].reset();
    const LayerSpec& l = graph.layer(i);
    const auto& b = graph.bottoms(i);
    const BasicTensor<T>& in = cache.outputs[b[0]];
    switch (l.kind) {
      case LayerKind::Input:
        break;
      case LayerKind::Conv: {
        ConvGrads<T> cg = conv2d_backward(in, weights.at(weight_blob(l.name)), l.conv_spec(), go);
        grads.at(weight_blob(l.name)) = std::move(cg.weights);
        if (l.conv_spec().has_bias) grads.at(bias_blob(l.name)) = std::move(cg.bias);
        if (b[0] != 0) accumulate(g[b[0]], std::move(cg.input));
        break;
      }
      case LayerKind::Relu:
        accumulate(g[b[0]], relu_backward(in, go));
        break;
      case LayerKind::Pool:
        if (cache.argmax[i].size() != go.size()) {
          throw GraphError("pool cache of '" + l.name + "' does not match its gradient");
        }
        accumulate(g[b[0]], maxpool_backward<T>(in.shape(), cache.argmax[i], go));
        break;
      case LayerKind::Deconv: {
        DeconvGrads<T> dg = deconv_backward(in, weights.at(weight_blob(l.name)), l.deconv_spec(), go);
        if (!l.deconv_spec().frozen) grads.at(weight_blob(l.name)) = std::move(dg.weights);
        accumulate(g[b[0]], std::move(dg.input));
        break;
      }
      case LayerKind::Sum: {
        const std::vector<double> scales = l.sum_scales();
        for (std::size_t k = 0; k < b.size(); ++k) {
          accumulate(g[b[k]], scales[k] == 1.0 ? BasicTensor<T>(go) : scale(go, static_cast<T>(scales[k])));
        }
        break;
      }
      case LayerKind::Crop:
        accumulate(g[b[0]], crop_backward(in.shape(), go));
        break;
      case LayerKind::Dropout: {
        const BasicTensor<T>& mask = cache.masks[i];
        BasicTensor<T> gi(go.shape());
        if (mask.shape() == go.shape()) {
          for (std::size_t k = 0; k < go.size(); ++k) gi[k] = go[k] * mask[k];
        } else {
          gi = go;  // forward ran in inference mode: identity
        }
        accumulate(g[b[0]], std::move(gi));
        break;
      }
    }
  }
  return grads;
}

template ForwardResult<float> forward(const Graph&, const BasicWeightStore<float>&,
                                      const BasicTensor<float>&, const ForwardOptions&);
template ForwardResult<double> forward(const Graph&, const BasicWeightStore<double>&,
                                       const BasicTensor<double>&, const ForwardOptions&);
template BasicTensor<float> forward_from(const Graph&, const BasicWeightStore<float>&,
                                         ActivationCache<float>&, std::size_t,
                                         const ForwardOptions&);
template BasicTensor<double> forward_from(const Graph&, const BasicWeightStore<double>&,
                                          ActivationCache<double>&, std::size_t,
                                          const ForwardOptions&);
template BasicWeightStore<float> backward(const Graph&, const BasicWeightStore<float>&,
                                          const ActivationCache<float>&, const BasicTensor<float>&);
template BasicWeightStore<double> backward(const Graph&, const BasicWeightStore<double>&,
                                           const ActivationCache<double>&,
                                           const BasicTensor<double>&);

}  // namespace dilfcn
