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

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "dilfcn/graph.hpp"
#include "dilfcn/random.hpp"

namespace dilfcn {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{0x44, 0x46, 0x4B, 0x57};  // "DFKW"
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::size_t pos() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("truncated weight file while reading ") + what, pos_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Drops trailing unit extents; a (C,1,1,1) bias is stored as a 1-D blob.
std::vector<std::size_t> stored_extents(const Shape4& s) {
  std::vector<std::size_t> e{s.n, s.c, s.h, s.w};
  while (e.size() > 1 && e.back() == 1) e.pop_back();
  return e;
}

}  // namespace

std::size_t total_elements(const WeightStore& store) {
  std::size_t n = 0;
  for (const auto& [name, t] : store) n += t.size();
  return n;
}

WeightStore init_weights(const Graph& graph, std::uint64_t seed) {
  Rng rng(seed);
  WeightStore store;
  for (const BlobInfo& b : graph.blobs()) {
    const LayerSpec& layer = graph.layer(b.layer);
    Tensor t(b.shape);
    if (layer.kind == LayerKind::Deconv) {
      t = make_bilinear_kernel<float>(b.shape.h, b.shape.c, layer.deconv_spec().classwise);
      if (!(t.shape() == b.shape)) {
        throw GraphError("bilinear init of '" + layer.name + "' needs equal in/out channels");
      }
    } else if (!b.is_bias && layer.init == WeightInit::Xavier) {
      const double fan_in = static_cast<double>(b.shape.c * b.shape.h * b.shape.w);
      const double fan_out = static_cast<double>(b.shape.n * b.shape.h * b.shape.w);
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    store.emplace(b.name, std::move(t));
  }
  return store;
}

template <typename T>
void check_weights(const Graph& graph, const BasicWeightStore<T>& weights) {
  for (const BlobInfo& b : graph.blobs()) {
    const auto it = weights.find(b.name);
    if (it == weights.end()) throw GraphError("missing weight blob '" + b.name + "'");
    if (!(it->second.shape() == b.shape)) {
      throw GraphError("blob '" + b.name + "' has shape " + it->second.shape().str() +
                       ", expected " + b.shape.str());
    }
  }
}

template void check_weights(const Graph&, const BasicWeightStore<float>&);
template void check_weights(const Graph&, const BasicWeightStore<double>&);

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_weights(const WeightStore& store) {
  Writer w;
  for (std::uint8_t b : kMagic) w.u8(b);
  w.u16(kVersion);
  if (store.size() > UINT32_MAX) throw DataError("too many blobs for the weight format");
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    if (name.empty() || name.size() > UINT16_MAX) {
      throw DataError("blob name '" + name + "' cannot be encoded");
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    const auto ext = stored_extents(t.shape());
    w.u8(static_cast<std::uint8_t>(ext.size()));
    for (std::size_t e : ext) {
      if (e > UINT32_MAX) throw DataError("extent of '" + name + "' exceeds u32");
      w.u32(static_cast<std::uint32_t>(e));
    }
    for (float v : t.data()) w.f32(v);
  }
  return std::move(w.bytes);
}

WeightStore decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (std::uint8_t b : kMagic) {
    const std::size_t at = r.pos();
    if (r.u8("magic") != b) throw ParseError("bad magic, expected \"DFKW\"", at);
  }
  {
    const std::size_t at = r.pos();
    const std::uint16_t version = r.u16("version");
    if (version != kVersion) {
      throw ParseError("unsupported weight file version " + std::to_string(version), at);
    }
  }
  const std::uint32_t count = r.u32("blob count");
  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t blob_at = r.pos();
    const std::uint16_t name_len = r.u16("name length");
    if (name_len == 0) throw ParseError("empty blob name", blob_at);
    std::string name = r.str(name_len, "blob name");

    const std::size_t ndim_at = r.pos();
    const std::uint8_t ndim = r.u8("ndim");
    if (ndim < 1 || ndim > 4) {
      throw ParseError("blob '" + name + "' has unsupported rank " + std::to_string(ndim), ndim_at);
    }
    std::array<std::size_t, 4> ext{1, 1, 1, 1};
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const std::size_t at = r.pos();
      ext[d] = r.u32("extent");
      if (ext[d] == 0) throw ParseError("blob '" + name + "' has a zero extent", at);
    }
    const Shape4 shape{ext[0], ext[1], ext[2], ext[3]};
    try {
      shape.validate();
    } catch (const ShapeError& e) {
      throw ParseError(e.what(), ndim_at);
    }
    const std::size_t n = shape.numel();
    if (n > (SIZE_MAX / 4)) throw ParseError("blob '" + name + "' is too large", ndim_at);
    r.need(4 * n, "blob values");
    std::vector<float> values(n);
    for (std::size_t k = 0; k < n; ++k) values[k] = std::bit_cast<float>(r.u32("value"));
    if (!store.emplace(name, Tensor(shape, std::move(values))).second) {
      throw ParseError("duplicate blob '" + name + "'", blob_at);
    }
  }
  if (!r.done()) throw ParseError("trailing bytes after last blob", r.pos());
  return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_weights(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write weight file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

// ---------------------------------------------------------------------------

ImportReport import_named_weights(const WeightStore& store, const WeightStore& donor,
                                  const std::map<std::string, std::string>& name_map) {
  ImportReport report{store, {}, {}};
  for (const auto& [target, source] : name_map) {
    const auto src = donor.find(source);
    if (src == donor.end()) throw DataError("donor has no blob '" + source + "'");
    auto dst = report.store.find(target);
    if (dst == report.store.end()) {
      report.mismatches.push_back(target + " <- " + source + ": absent from target");
      continue;
    }
    if (!(dst->second.shape() == src->second.shape())) {
      report.mismatches.push_back(target + " <- " + source + ": " + dst->second.shape().str() +
                                  " vs " + src->second.shape().str());
      continue;
    }
    dst->second = src->second;
    report.copied.push_back(target);
  }
  return report;
}

}  // namespace dilfcn
