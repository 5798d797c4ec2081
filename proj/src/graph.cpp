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

#include "dilfcn/graph.hpp"

#include <algorithm>

namespace dilfcn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kKindNames{{
    {LayerKind::Input, "input"},
    {LayerKind::Conv, "conv"},
    {LayerKind::Relu, "relu"},
    {LayerKind::Pool, "pool"},
    {LayerKind::Deconv, "deconv"},
    {LayerKind::Sum, "sum"},
    {LayerKind::Crop, "crop"},
    {LayerKind::Dropout, "dropout"},
}};

std::size_t expected_arity(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input:
      return 0;
    case LayerKind::Crop:
      return 2;
    case LayerKind::Sum:
      return 2;  // minimum
    default:
      return 1;
  }
}

}  // namespace

std::string_view kind_name(LayerKind kind) noexcept {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<LayerKind> parse_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string weight_blob(std::string_view layer) { return std::string(layer) + ".w"; }
std::string bias_blob(std::string_view layer) { return std::string(layer) + ".b"; }

LayerSpec LayerSpec::input(std::string name, std::size_t channels) {
  return LayerSpec{std::move(name), LayerKind::Input, {}, InputParams{channels}};
}

LayerSpec LayerSpec::conv(std::string name, std::string bottom, const ConvSpec& spec,
                          WeightInit init) {
  return LayerSpec{std::move(name), LayerKind::Conv, {std::move(bottom)}, spec, init};
}

LayerSpec LayerSpec::relu(std::string name, std::string bottom) {
  return LayerSpec{std::move(name), LayerKind::Relu, {std::move(bottom)}, std::monostate{}};
}

LayerSpec LayerSpec::pool(std::string name, std::string bottom, const PoolSpec& spec) {
  return LayerSpec{std::move(name), LayerKind::Pool, {std::move(bottom)}, spec};
}

LayerSpec LayerSpec::deconv(std::string name, std::string bottom, const DeconvSpec& spec) {
  return LayerSpec{std::move(name), LayerKind::Deconv, {std::move(bottom)}, spec};
}

LayerSpec LayerSpec::sum(std::string name, std::vector<std::string> bottoms,
                         std::vector<double> scales) {
  return LayerSpec{std::move(name), LayerKind::Sum, std::move(bottoms),
                   SumParams{std::move(scales)}};
}

LayerSpec LayerSpec::crop(std::string name, std::string bottom, std::string reference) {
  return LayerSpec{std::move(name), LayerKind::Crop, {std::move(bottom), std::move(reference)},
                   std::monostate{}};
}

LayerSpec LayerSpec::dropout(std::string name, std::string bottom, double rate) {
  return LayerSpec{std::move(name), LayerKind::Dropout, {std::move(bottom)},
                   DropoutParams{rate}};
}

std::vector<double> LayerSpec::sum_scales() const {
  const auto* p = std::get_if<SumParams>(&params);
  if (p == nullptr || p->scales.empty()) return std::vector<double>(bottoms.size(), 1.0);
  return p->scales;
}

// ---------------------------------------------------------------------------

void Graph::add(LayerSpec layer) {
  const std::string& name = layer.name;
  if (name.empty()) throw GraphError("layer without a name");
  if (index_.contains(name)) throw GraphError("duplicate layer name '" + name + "'");
  if (layers_.empty() != (layer.kind == LayerKind::Input)) {
    throw GraphError(layers_.empty() ? "first layer must be the input layer, got '" + name + "'"
                                     : "only one input layer is allowed ('" + name + "')");
  }

  const std::size_t arity = expected_arity(layer.kind);
  const bool arity_ok = layer.kind == LayerKind::Sum ? layer.bottoms.size() >= arity
                                                     : layer.bottoms.size() == arity;
  if (!arity_ok) {
    throw GraphError("layer '" + name + "' of kind " + std::string(kind_name(layer.kind)) +
                     " has " + std::to_string(layer.bottoms.size()) + " bottoms");
  }

  const bool params_ok = [&] {
    switch (layer.kind) {
      case LayerKind::Input:
        return std::holds_alternative<InputParams>(layer.params);
      case LayerKind::Conv:
        return std::holds_alternative<ConvSpec>(layer.params);
      case LayerKind::Pool:
        return std::holds_alternative<PoolSpec>(layer.params);
      case LayerKind::Deconv:
        return std::holds_alternative<DeconvSpec>(layer.params);
      case LayerKind::Sum:
        return std::holds_alternative<SumParams>(layer.params) ||
               std::holds_alternative<std::monostate>(layer.params);
      case LayerKind::Dropout:
        return std::holds_alternative<DropoutParams>(layer.params);
      default:
        return std::holds_alternative<std::monostate>(layer.params);
    }
  }();
  if (!params_ok) throw GraphError("layer '" + name + "' carries parameters of the wrong kind");

  switch (layer.kind) {
    case LayerKind::Input:
      if (layer.input_params().channels == 0) throw GraphError("input needs channels >= 1");
      break;
    case LayerKind::Conv:
      layer.conv_spec().validate();
      break;
    case LayerKind::Pool:
      layer.pool_spec().validate();
      break;
    case LayerKind::Deconv:
      layer.deconv_spec().validate();
      break;
    case LayerKind::Sum: {
      const auto* p = std::get_if<SumParams>(&layer.params);
      if (p != nullptr && !p->scales.empty() && p->scales.size() != layer.bottoms.size()) {
        throw GraphError("sum '" + name + "' has " + std::to_string(layer.bottoms.size()) +
                         " bottoms but " + std::to_string(p->scales.size()) + " scales");
      }
      break;
    }
    case LayerKind::Dropout: {
      const double r = layer.dropout_params().rate;
      if (!(r >= 0.0 && r < 1.0)) throw GraphError("dropout rate must lie in [0, 1)");
      break;
    }
    default:
      break;
  }

  std::vector<std::size_t> bottom_idx;
  for (const std::string& b : layer.bottoms) {
    const auto it = index_.find(b);
    if (it == index_.end()) {
      throw GraphError("layer '" + name + "' references undeclared bottom '" + b + "'");
    }
    bottom_idx.push_back(it->second);
  }

  index_.emplace(name, layers_.size());
  bottoms_.push_back(std::move(bottom_idx));
  layers_.push_back(std::move(layer));
  try {
    channels();
  } catch (...) {
    index_.erase(layers_.back().name);
    bottoms_.pop_back();
    layers_.pop_back();
    throw;
  }
}

bool Graph::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t Graph::index_of(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw GraphError("no layer named '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::vector<std::size_t>> Graph::consumers() const {
  std::vector<std::vector<std::size_t>> out(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (std::size_t b : bottoms_[i]) out[b].push_back(i);
  }
  return out;
}

std::size_t Graph::output_index() const {
  if (layers_.empty()) throw GraphError("empty graph");
  const auto cons = consumers();
  std::optional<std::size_t> sink;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!cons[i].empty()) continue;
    if (sink) {
      throw GraphError("graph has several outputs: '" + layers_[*sink].name + "' and '" +
                       layers_[i].name + "'");
    }
    sink = i;
  }
  return *sink;  // the last layer never has consumers
}

void Graph::validate() const {
  if (layers_.empty()) throw GraphError("empty graph");
  output_index();
  channels();
  if (layers_.size() == 1) throw GraphError("graph has no layers beyond its input");
}

std::vector<std::size_t> Graph::channels() const {
  std::vector<std::size_t> ch(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const auto& b = bottoms_[i];
    switch (l.kind) {
      case LayerKind::Input:
        ch[i] = l.input_params().channels;
        break;
      case LayerKind::Conv:
        ch[i] = l.conv_spec().out_channels;
        break;
      case LayerKind::Deconv: {
        const DeconvSpec& d = l.deconv_spec();
        if (d.classwise && ch[b[0]] != d.channels) {
          throw GraphError("classwise deconv '" + l.name + "' maps " + std::to_string(ch[b[0]]) +
                           " channels to " + std::to_string(d.channels));
        }
        ch[i] = d.channels;
        break;
      }
      case LayerKind::Sum:
        for (std::size_t k : b) {
          if (ch[k] != ch[b[0]]) {
            throw GraphError("sum '" + l.name + "' mixes " + std::to_string(ch[b[0]]) + " and " +
                             std::to_string(ch[k]) + " channels");
          }
        }
        ch[i] = ch[b[0]];
        break;
      default:
        ch[i] = ch[b[0]];
        break;
    }
  }
  return ch;
}

std::size_t Graph::input_channels() const {
  if (layers_.empty()) throw GraphError("empty graph");
  return layers_.front().input_params().channels;
}

std::vector<Shape4> Graph::infer_shapes(const Shape4& input) const {
  input.validate();
  if (layers_.empty()) throw GraphError("empty graph");
  if (input.c != input_channels()) {
    throw ShapeError("input has " + std::to_string(input.c) + " channels, graph expects " +
                     std::to_string(input_channels()));
  }
  std::vector<Shape4> s(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const auto& b = bottoms_[i];
    try {
      switch (l.kind) {
        case LayerKind::Input:
          s[i] = input;
          break;
        case LayerKind::Conv: {
          const ConvSpec& c = l.conv_spec();
          const Shape4& in = s[b[0]];
          s[i] = Shape4{in.n, c.out_channels,
                        conv_output_extent(in.h, c.pad, c.kernel, c.stride, c.dilation),
                        conv_output_extent(in.w, c.pad, c.kernel, c.stride, c.dilation)};
          break;
        }
        case LayerKind::Pool: {
          const PoolSpec& p = l.pool_spec();
          const Shape4& in = s[b[0]];
          s[i] = Shape4{in.n, in.c, conv_output_extent(in.h, 0, p.kernel, p.stride, 1),
                        conv_output_extent(in.w, 0, p.kernel, p.stride, 1)};
          break;
        }
        case LayerKind::Deconv: {
          const DeconvSpec& d = l.deconv_spec();
          const Shape4& in = s[b[0]];
          s[i] = Shape4{in.n, d.channels, (in.h - 1) * d.stride + d.kernel,
                        (in.w - 1) * d.stride + d.kernel};
          break;
        }
        case LayerKind::Sum:
          for (std::size_t k : b) require_same_shape(s[k], s[b[0]], "sum");
          s[i] = s[b[0]];
          break;
        case LayerKind::Crop: {
          const Shape4& in = s[b[0]];
          const Shape4& ref = s[b[1]];
          if (ref.h > in.h || ref.w > in.w) {
            throw ShapeError("reference " + ref.str() + " larger than input " + in.str());
          }
          s[i] = Shape4{in.n, in.c, ref.h, ref.w};
          break;
        }
        default:
          s[i] = s[b[0]];
          break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.what());
    }
  }
  return s;
}

std::size_t Graph::required_divisor() const {
  std::vector<std::size_t> down(layers_.size(), 1);
  std::size_t worst = 1;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const auto& b = bottoms_[i];
    std::size_t f = 1;
    for (std::size_t k : b) f = std::max(f, down[k]);
    if (l.kind == LayerKind::Conv) f *= l.conv_spec().stride;
    if (l.kind == LayerKind::Pool) f *= l.pool_spec().stride;
    if (l.kind == LayerKind::Deconv) f = std::max<std::size_t>(1, f / l.deconv_spec().stride);
    down[i] = f;
    worst = std::max(worst, f);
  }
  return worst;
}

std::size_t Graph::count(LayerKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(layers_.begin(), layers_.end(), [kind](const LayerSpec& l) { return l.kind == kind; }));
}

std::vector<BlobInfo> Graph::blobs() const {
  const std::vector<std::size_t> ch = channels();
  std::vector<BlobInfo> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const std::size_t in_c = l.bottoms.empty() ? 0 : ch[bottoms_[i][0]];
    if (l.kind == LayerKind::Conv) {
      const ConvSpec& c = l.conv_spec();
      out.push_back({weight_blob(l.name), Shape4{c.out_channels, in_c, c.kernel, c.kernel}, i,
                     false, false});
      if (c.has_bias) {
        out.push_back({bias_blob(l.name), Shape4{c.out_channels, 1, 1, 1}, i, false, true});
      }
    } else if (l.kind == LayerKind::Deconv) {
      const DeconvSpec& d = l.deconv_spec();
      out.push_back({weight_blob(l.name), Shape4{in_c, d.channels, d.kernel, d.kernel}, i,
                     d.frozen, false});
    }
  }
  return out;
}

}  // namespace dilfcn
