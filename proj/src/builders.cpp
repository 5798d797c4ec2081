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

namespace dilfcn {

namespace {

struct FamilyInfo {
  Family family;
  std::string_view canonical;
  std::string_view alias;
};

constexpr std::array<FamilyInfo, 3> kFamilies{{
    {Family::Fcn8sVgg16Baseline, "fcn8s-vgg16", "fcn8s_vgg16_baseline"},
    {Family::DilatedFcn2sVgg16, "dilated-fcn2s-vgg16", "dilated_fcn2s_vgg16"},
    {Family::DilatedFcn2sVgg19, "dilated-fcn2s-vgg19", "dilated_fcn2s_vgg19"},
}};

constexpr std::array<std::size_t, 5> kBlockWidths{64, 128, 256, 512, 512};
constexpr std::size_t kFcWidth = 4096;

std::size_t scaled(std::size_t width, std::size_t divisor) {
  if (width % divisor != 0) {
    throw GraphError("width divisor " + std::to_string(divisor) + " does not divide " +
                     std::to_string(width));
  }
  return width / divisor;
}

ConvSpec conv3x3(std::size_t out) { return ConvSpec{out, 3, 1, 1, 1, true}; }
ConvSpec conv1x1(std::size_t out) { return ConvSpec{out, 1, 1, 0, 1, true}; }

DeconvSpec upsample(std::size_t classes, std::size_t factor) {
  return DeconvSpec{classes, 2 * factor, factor, true, true};
}

/// Adds a 1x1 zero-initialized score head on `pool`, crops `upscored` onto
/// it and fuses the two. Returns the fusion layer's name.
std::string add_skip(Graph& g, const std::string& upscored, const std::string& pool,
                     std::size_t classes, double skip_scale) {
  const std::string head = "score_" + pool;
  g.add(LayerSpec::conv(head, pool, conv1x1(classes), WeightInit::Zero));
  const std::string cropped = upscored + "_crop";
  g.add(LayerSpec::crop(cropped, upscored, head));
  const std::string fuse = "fuse_" + pool;
  g.add(LayerSpec::sum(fuse, {cropped, head}, {1.0, skip_scale}));
  return fuse;
}

}  // namespace

std::optional<Family> parse_family(std::string_view name) noexcept {
  for (const FamilyInfo& f : kFamilies) {
    if (name == f.canonical || name == f.alias) return f.family;
  }
  if (name == "fcn8s_vgg16") return Family::Fcn8sVgg16Baseline;
  return std::nullopt;
}

std::string_view family_name(Family family) noexcept {
  for (const FamilyInfo& f : kFamilies) {
    if (f.family == family) return f.canonical;
  }
  return "?";
}

Graph build_architecture(Family family, std::size_t num_classes, const BuildOptions& options) {
  if (num_classes < 2) throw GraphError("num_classes must be >= 2");
  if (options.width_divisor < 1) throw GraphError("width divisor must be >= 1");
  const bool dilated = family != Family::Fcn8sVgg16Baseline;
  const std::array<std::size_t, 5> depth = family == Family::DilatedFcn2sVgg19
                                               ? std::array<std::size_t, 5>{2, 2, 4, 4, 4}
                                               : std::array<std::size_t, 5>{2, 2, 3, 3, 3};
  Graph g;
  g.add(LayerSpec::input("data", options.input_channels));
  std::string prev = "data";
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t width = scaled(kBlockWidths[b], options.width_divisor);
    for (std::size_t i = 0; i < depth[b]; ++i) {
      const std::string id = std::to_string(b + 1) + "_" + std::to_string(i + 1);
      g.add(LayerSpec::conv("conv" + id, prev, conv3x3(width)));
      g.add(LayerSpec::relu("relu" + id, "conv" + id));
      prev = "relu" + id;
    }
    const std::string pool = "pool" + std::to_string(b + 1);
    g.add(LayerSpec::pool(pool, prev, PoolSpec{2, 2}));
    prev = pool;
  }

  const std::size_t fc = scaled(kFcWidth, options.width_divisor);
  // Dilation 3 on a 3x3 kernel covers the same 7x7 window as the baseline Fc6.
  const ConvSpec fc6 = dilated ? ConvSpec{fc, 3, 1, 3, 3, true} : ConvSpec{fc, 7, 1, 3, 1, true};
  g.add(LayerSpec::conv("fc6", prev, fc6));
  g.add(LayerSpec::relu("relu6", "fc6"));
  prev = "relu6";
  if (options.dropout > 0.0) {
    g.add(LayerSpec::dropout("drop6", prev, options.dropout));
    prev = "drop6";
  }
  g.add(LayerSpec::conv("fc7", prev, conv1x1(fc)));
  g.add(LayerSpec::relu("relu7", "fc7"));
  prev = "relu7";
  if (options.dropout > 0.0) {
    g.add(LayerSpec::dropout("drop7", prev, options.dropout));
    prev = "drop7";
  }
  g.add(LayerSpec::conv("score_fr", prev, conv1x1(num_classes)));
  prev = "score_fr";

  if (dilated) {
    const std::array<std::string, 4> pools{"pool4", "pool3", "pool2", "pool1"};
    for (std::size_t k = 0; k < pools.size(); ++k) {
      const std::string up = "upscore" + std::to_string(5 - k);
      g.add(LayerSpec::deconv(up, prev, upsample(num_classes, 2)));
      prev = add_skip(g, up, pools[k], num_classes, options.skip_scales[k]);
    }
    g.add(LayerSpec::deconv("upscore1", prev, upsample(num_classes, 2)));
    g.add(LayerSpec::crop("score", "upscore1", "data"));
  } else {
    g.add(LayerSpec::deconv("upscore2", prev, upsample(num_classes, 2)));
    prev = add_skip(g, "upscore2", "pool4", num_classes, options.skip_scales[0]);
    g.add(LayerSpec::deconv("upscore_pool4", prev, upsample(num_classes, 2)));
    prev = add_skip(g, "upscore_pool4", "pool3", num_classes, options.skip_scales[1]);
    g.add(LayerSpec::deconv("upscore8", prev, upsample(num_classes, 8)));
    g.add(LayerSpec::crop("score", "upscore8", "data"));
  }
  g.validate();
  return g;
}

}  // namespace dilfcn
