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

#include "dilfcn/analyze.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace dilfcn {

std::size_t effective_kernel(std::size_t kernel, std::size_t dilation) {
  return kernel + (kernel - 1) * (dilation - 1);
}

ExtentResult output_extent(std::size_t in, std::size_t pad, std::size_t kernel,
                           std::size_t stride, std::size_t dilation) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  const std::size_t k_eff = effective_kernel(kernel, dilation);
  if (in + 2 * pad < k_eff) {
    throw ShapeError("negative extent: effective kernel " + std::to_string(k_eff) +
                     " exceeds padded input " + std::to_string(in + 2 * pad));
  }
  const std::size_t span = in + 2 * pad - k_eff;
  return ExtentResult{span / stride + 1, span % stride == 0};
}

std::vector<RfStep> receptive_field_chain(std::span<const ChainLayer> layers) {
  std::vector<RfStep> out;
  out.reserve(layers.size());
  RfStep cur;
  for (const ChainLayer& l : layers) {
    cur.rf += (effective_kernel(l.kernel, l.dilation) - 1) * cur.jump;
    cur.jump *= l.stride;
    out.push_back(cur);
  }
  return out;
}

std::size_t doubling_receptive_field(std::size_t previous) { return 2 * previous + 1; }

std::size_t exp_dilation_rf(std::size_t i) {
  if (i + 2 >= static_cast<std::size_t>(std::numeric_limits<std::size_t>::digits)) {
    throw Error("exp_dilation_rf(" + std::to_string(i) + ") overflows");
  }
  return (std::size_t{1} << (i + 2)) - 1;
}

// ---------------------------------------------------------------------------

const LayerParams& ParamCount::layer(std::string_view name) const {
  for (const LayerParams& p : per_layer) {
    if (p.name == name) return p;
  }
  throw GraphError("no learnable layer named '" + std::string(name) + "'");
}

ParamCount count_parameters(const Graph& graph) {
  ParamCount count;
  std::map<std::size_t, LayerParams> by_layer;
  for (const BlobInfo& b : graph.blobs()) {
    LayerParams& p = by_layer[b.layer];
    p.name = graph.layer(b.layer).name;
    p.kind = graph.layer(b.layer).kind;
    p.frozen = b.frozen;
    (b.is_bias ? p.bias : p.weights) += b.shape.numel();
    count.total += b.shape.numel();
    if (b.frozen) count.frozen += b.shape.numel();
  }
  for (auto& [idx, p] : by_layer) count.per_layer.push_back(std::move(p));
  return count;
}

std::vector<ParamGroup> param_groups(const Graph& graph, const ParamCount& count) {
  std::vector<ParamGroup> groups{{"backbone", 0}, {"fc6", 0}, {"fc7", 0}, {"score", 0},
                                 {"upsampling", 0}};
  for (const LayerParams& p : count.per_layer) {
    std::size_t g = 0;
    if (p.kind == LayerKind::Deconv) {
      g = 4;
    } else if (p.name == "fc6") {
      g = 1;
    } else if (p.name == "fc7") {
      g = 2;
    } else if (p.name.rfind("score", 0) == 0) {
      g = 3;
    } else if (graph.contains("fc6") && graph.index_of(p.name) > graph.index_of("fc6")) {
      g = 3;
    }
    groups[g].params += p.total();
  }
  return groups;
}

// ---------------------------------------------------------------------------

const LayerAnalysis& AnalysisReport::layer(std::string_view name) const {
  for (const LayerAnalysis& l : layers) {
    if (l.name == name) return l;
  }
  throw GraphError("no layer named '" + std::string(name) + "' in report");
}

AnalysisReport analyze(const Graph& graph, const Shape4& input) {
  graph.validate();
  const std::vector<Shape4> shapes = graph.infer_shapes(input);
  const ParamCount params = count_parameters(graph);
  std::map<std::string, const LayerParams*> params_by_name;
  for (const LayerParams& p : params.per_layer) params_by_name[p.name] = &p;

  AnalysisReport r;
  r.input = input;
  r.layers.resize(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const LayerSpec& l = graph.layer(i);
    const auto& b = graph.bottoms(i);
    LayerAnalysis& a = r.layers[i];
    a.name = l.name;
    a.kind = l.kind;
    a.out_shape = shapes[i];
    a.activation_bytes = shapes[i].numel() * kBytesPerElement;
    if (const auto it = params_by_name.find(l.name); it != params_by_name.end()) {
      a.weights = it->second->weights;
      a.bias = it->second->bias;
      a.params = it->second->total();
    }
    if (b.empty()) continue;

    const LayerAnalysis& in = r.layers[b[0]];
    const Shape4& in_shape = shapes[b[0]];
    a.receptive_field = in.receptive_field;
    a.jump = in.jump;
    auto windowed = [&](std::size_t k, std::size_t s, std::size_t p, std::size_t d) {
      a.effective_kernel = effective_kernel(k, d);
      a.receptive_field = in.receptive_field + (a.effective_kernel - 1) * in.jump;
      a.jump = in.jump * s;
      if (!output_extent(in_shape.h, p, k, s, d).exact || !output_extent(in_shape.w, p, k, s, d).exact) {
        r.warnings.push_back(l.name + ": (I + 2P - K') not divisible by stride " +
                             std::to_string(s) + "; trailing input pixels are dropped");
      }
    };
    switch (l.kind) {
      case LayerKind::Conv: {
        const ConvSpec& c = l.conv_spec();
        windowed(c.kernel, c.stride, c.pad, c.dilation);
        break;
      }
      case LayerKind::Pool:
        windowed(l.pool_spec().kernel, l.pool_spec().stride, 0, 1);
        break;
      case LayerKind::Deconv: {
        const DeconvSpec& d = l.deconv_spec();
        a.effective_kernel = d.kernel;
        const std::size_t taps = (d.kernel + d.stride - 1) / d.stride;
        a.receptive_field = in.receptive_field + (taps - 1) * in.jump;
        if (in.jump % d.stride != 0) {
          r.warnings.push_back(l.name + ": upsampling below input resolution (jump " +
                               std::to_string(in.jump) + " / " + std::to_string(d.stride) + ")");
        }
        a.jump = std::max<std::size_t>(1, in.jump / d.stride);
        break;
      }
      case LayerKind::Sum:
        for (std::size_t k : b) {
          a.receptive_field = std::max(a.receptive_field, r.layers[k].receptive_field);
          if (r.layers[k].jump != in.jump) {
            r.warnings.push_back(l.name + ": fuses maps with different jumps");
          }
        }
        break;
      default:
        break;
    }
  }

  for (const LayerAnalysis& a : r.layers) {
    r.total_params += a.params;
    r.total_activation_bytes += a.activation_bytes;
  }
  r.frozen_params = params.frozen;
  r.est_inference_bytes = r.total_activation_bytes + kBytesPerElement * r.total_params;
  r.est_train_bytes = 2 * r.total_activation_bytes + 3 * kBytesPerElement * r.total_params;
  return r;
}

MemoryEstimate estimate_memory(const Graph& graph, const Shape4& input, MemoryMode mode) {
  const std::size_t div = graph.required_divisor();
  if (input.h % div != 0 || input.w % div != 0) {
    throw ShapeError("memory estimate needs extents divisible by " + std::to_string(div));
  }
  const AnalysisReport r = analyze(graph, input);
  MemoryEstimate m;
  if (mode == MemoryMode::Inference) {
    m.activation_bytes = r.total_activation_bytes;
    m.param_bytes = kBytesPerElement * r.total_params;
  } else {
    m.activation_bytes = 2 * r.total_activation_bytes;
    m.param_bytes = 3 * kBytesPerElement * r.total_params;
  }
  m.total_bytes = m.activation_bytes + m.param_bytes;
  return m;
}

// ---------------------------------------------------------------------------

std::string format_report(const AnalysisReport& r, MemoryMode mode) {
  std::ostringstream os;
  os << "input " << r.input.str() << "\n";
  os << std::left << std::setw(16) << "layer" << std::setw(8) << "kind" << std::right
     << std::setw(22) << "out_shape" << std::setw(7) << "k_eff" << std::setw(7) << "rf"
     << std::setw(6) << "jump" << std::setw(12) << "weights" << std::setw(8) << "bias"
     << std::setw(12) << "params" << std::setw(12) << "act_bytes" << "\n";
  for (const LayerAnalysis& a : r.layers) {
    os << std::left << std::setw(16) << a.name << std::setw(8) << kind_name(a.kind) << std::right
       << std::setw(22) << a.out_shape.str() << std::setw(7) << a.effective_kernel << std::setw(7)
       << a.receptive_field << std::setw(6) << a.jump << std::setw(12) << a.weights
       << std::setw(8) << a.bias << std::setw(12) << a.params << std::setw(12)
       << a.activation_bytes << "\n";
  }
  os << "total_params " << r.total_params << "\n";
  os << "frozen_params " << r.frozen_params << "\n";
  os << "total_activation_bytes " << r.total_activation_bytes << "\n";
  if (mode == MemoryMode::Inference) {
    os << "est_inference_bytes " << r.est_inference_bytes << "\n";
  } else {
    os << "est_train_bytes " << r.est_train_bytes << "\n";
  }
  for (const std::string& w : r.warnings) os << "warning: " << w << "\n";
  return os.str();
}

std::string report_csv(const AnalysisReport& r) {
  std::ostringstream os;
  os << "layer,out_n,out_c,out_h,out_w,k_eff,rf,jump,params,act_bytes\n";
  for (const LayerAnalysis& a : r.layers) {
    os << a.name << ',' << a.out_shape.n << ',' << a.out_shape.c << ',' << a.out_shape.h << ','
       << a.out_shape.w << ',' << a.effective_kernel << ',' << a.receptive_field << ',' << a.jump
       << ',' << a.params << ',' << a.activation_bytes << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

Comparison compare(const Graph& a, const Graph& b, const Shape4& input) {
  const ParamCount pa = count_parameters(a);
  const ParamCount pb = count_parameters(b);
  Comparison c;
  c.total_params_a = pa.total;
  c.total_params_b = pb.total;
  c.param_ratio = pb.total == 0 ? 0.0 : static_cast<double>(pa.total) / static_cast<double>(pb.total);
  auto fc6 = [](const ParamCount& p, std::size_t& weights, std::size_t& total) {
    for (const LayerParams& l : p.per_layer) {
      if (l.name == "fc6") {
        weights = l.weights;
        total = l.total();
      }
    }
  };
  fc6(pa, c.fc6_weights_a, c.fc6_params_a);
  fc6(pb, c.fc6_weights_b, c.fc6_params_b);
  c.train_bytes_a = estimate_memory(a, input, MemoryMode::Training).total_bytes;
  c.train_bytes_b = estimate_memory(b, input, MemoryMode::Training).total_bytes;
  c.inference_bytes_a = estimate_memory(a, input, MemoryMode::Inference).total_bytes;
  c.inference_bytes_b = estimate_memory(b, input, MemoryMode::Inference).total_bytes;

  std::map<std::string, LayerDiff> diffs;
  std::vector<std::string> order;
  for (const LayerParams& l : pa.per_layer) {
    diffs[l.name] = LayerDiff{l.name, l.total(), 0};
    order.push_back(l.name);
  }
  for (const LayerParams& l : pb.per_layer) {
    auto [it, fresh] = diffs.try_emplace(l.name, LayerDiff{l.name, 0, 0});
    it->second.params_b = l.total();
    if (fresh) order.push_back(l.name);
  }
  for (const std::string& name : order) {
    const LayerDiff& d = diffs[name];
    if (d.params_a != d.params_b) c.layer_diffs.push_back(d);
  }
  return c;
}

namespace {

std::string ratio3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace

std::string format_comparison(const Comparison& c) {
  std::ostringstream os;
  auto row = [&](const char* label, std::size_t x, std::size_t y) {
    os << std::left << std::setw(20) << label << std::right << std::setw(16) << x << std::setw(16)
       << y << std::setw(16) << static_cast<long long>(x) - static_cast<long long>(y) << "\n";
  };
  os << std::left << std::setw(20) << "metric" << std::right << std::setw(16) << "a"
     << std::setw(16) << "b" << std::setw(16) << "a-b" << "\n";
  row("total_params", c.total_params_a, c.total_params_b);
  row("fc6_weights", c.fc6_weights_a, c.fc6_weights_b);
  row("fc6_params", c.fc6_params_a, c.fc6_params_b);
  row("train_bytes", c.train_bytes_a, c.train_bytes_b);
  row("inference_bytes", c.inference_bytes_a, c.inference_bytes_b);
  os << "param_ratio " << ratio3(c.param_ratio) << "\n";
  if (!c.layer_diffs.empty()) {
    os << "per-layer differences:\n";
    for (const LayerDiff& d : c.layer_diffs) row(d.name.c_str(), d.params_a, d.params_b);
  }
  return os.str();
}

std::string comparison_csv(const Comparison& c) {
  std::ostringstream os;
  os << "metric,a,b\n";
  os << "total_params," << c.total_params_a << ',' << c.total_params_b << '\n';
  os << "fc6_weights," << c.fc6_weights_a << ',' << c.fc6_weights_b << '\n';
  os << "fc6_params," << c.fc6_params_a << ',' << c.fc6_params_b << '\n';
  os << "train_bytes," << c.train_bytes_a << ',' << c.train_bytes_b << '\n';
  os << "inference_bytes," << c.inference_bytes_a << ',' << c.inference_bytes_b << '\n';
  for (const LayerDiff& d : c.layer_diffs) {
    os << "layer_params:" << d.name << ',' << d.params_a << ',' << d.params_b << '\n';
  }
  os << "param_ratio," << ratio3(c.param_ratio) << '\n';
  return os.str();
}

}  // namespace dilfcn
