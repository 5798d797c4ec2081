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

#include "dilfcn/image_io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "dilfcn/error.hpp"

namespace dilfcn {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect_magic(const char* magic) {
    if (bytes_.size() < 2 || bytes_[0] != magic[0] || bytes_[1] != magic[1]) {
      throw ParseError(std::string("expected magic ") + magic, 0);
    }
    pos_ = 2;
  }

  std::size_t number(const char* field) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) throw ParseError(std::string(field) + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("expected ") + field, start);
    last_start_ = start;
    return v;
  }

  /// Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ParseError("expected whitespace before raster", pos_);
    }
    return pos_ + 1;
  }

  /// Offset of the first digit of the most recent number.
  std::size_t last_start() const noexcept { return last_start_; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t last_start_ = 0;
};

struct Raster {
  std::size_t width, height, offset;
};

Raster parse_header(std::span<const std::uint8_t> bytes, const char* magic, std::size_t channels) {
  HeaderReader r(bytes);
  r.expect_magic(magic);
  const std::size_t width = r.number("width");
  if (width == 0) throw ParseError("zero image width", r.last_start());
  const std::size_t height = r.number("height");
  if (height == 0) throw ParseError("zero image height", r.last_start());
  const std::size_t maxval = r.number("maxval");
  if (maxval != 255) {
    throw ParseError("maxval must be 255, got " + std::to_string(maxval), r.last_start());
  }
  const std::size_t offset = r.raster_start();
  const std::size_t need = width * height * channels;
  if (bytes.size() - offset < need) {
    throw ParseError("raster truncated: need " + std::to_string(need) + " bytes", bytes.size());
  }
  if (bytes.size() - offset > need) throw ParseError("trailing bytes after raster", offset + need);
  return {width, height, offset};
}

std::vector<std::uint8_t> encode(const char* magic, std::size_t w, std::size_t h,
                                 std::span<const std::uint8_t> pixels) {
  const std::string header = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  const Raster r = parse_header(bytes, "P6", 3);
  RgbImage img{r.width, r.height, {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.offset), bytes.end());
  return img;
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  const Raster r = parse_header(bytes, "P5", 1);
  GrayImage img{r.width, r.height, {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.offset), bytes.end());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.pixels.size() != image.width * image.height * 3) throw DataError("ppm pixel count mismatch");
  return encode("P6", image.width, image.height, image.pixels);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw DataError("pgm pixel count mismatch");
  return encode("P5", image.width, image.height, image.pixels);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

GrayImage read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_file(path, encode_ppm(image));
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_file(path, encode_pgm(image));
}

Tensor image_to_tensor(const RgbImage& image) {
  Tensor t(Shape4{1, 3, image.height, image.width}, 0.0f);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = image.pixels[(y * image.width + x) * 3 + c];
        t.at(0, c, y, x) = v / 255.0f - 0.5f;
      }
    }
  }
  return t;
}

LabelMap gray_to_labels(const GrayImage& image) {
  LabelMap m(1, image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) m.labels[i] = image.pixels[i];
  return m;
}

GrayImage labels_to_gray(const LabelMap& labels) {
  if (labels.n != 1) throw DataError("label map must hold a single image");
  GrayImage g{labels.w, labels.h, std::vector<std::uint8_t>(labels.size())};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.labels[i] > 255) throw DataError("label " + std::to_string(labels.labels[i]) + " exceeds 255");
    g.pixels[i] = static_cast<std::uint8_t>(labels.labels[i]);
  }
  return g;
}

}  // namespace dilfcn
