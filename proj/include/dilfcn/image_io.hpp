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
#include <filesystem>
#include <span>
#include <vector>

#include "dilfcn/layers.hpp"
#include "dilfcn/tensor.hpp"

namespace dilfcn {

/// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary P6 / P5 with maxval 255. Header comments are accepted.
/// Malformed input raises ParseError carrying the byte offset.
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

RgbImage read_ppm(const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// (1, 3, H, W) tensor with v / 255 - 0.5 per channel.
Tensor image_to_tensor(const RgbImage& image);
LabelMap gray_to_labels(const GrayImage& image);
/// Throws DataError if a label does not fit in one byte.
GrayImage labels_to_gray(const LabelMap& labels);

}  // namespace dilfcn
