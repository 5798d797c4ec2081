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

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dilfcn/graph.hpp"

namespace dilfcn {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

class LineParser {
 public:
  LineParser(std::size_t line_no, LayerKind kind, std::map<std::string, std::string> kv)
      : line_(line_no), kind_(kind), kv_(std::move(kv)) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, "line"); }

  bool has(const std::string& key) const { return kv_.contains(key); }

  std::string str(const std::string& key) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) fail(std::string(kind_name(kind_)) + " needs '" + key + "='");
    return it->second;
  }

  std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) {
    if (!has(key)) {
      if (!fallback) fail(std::string(kind_name(kind_)) + " needs '" + key + "='");
      return *fallback;
    }
    const std::string v = str(key);
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      fail("'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    if (v == "0") return false;
    if (v == "1") return true;
    fail("'" + key + "' expects 0 or 1, got '" + v + "'");
  }

  double real(std::string_view v, const std::string& key) const {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      fail("'" + key + "' expects a real number, got '" + std::string(v) + "'");
    }
    return out;
  }

  std::vector<std::string> bottoms() {
    std::vector<std::string> out;
    const std::string all = str("bottom");
    for (std::string_view b : split(all, ',')) {
      if (b.empty()) fail("empty bottom name");
      out.emplace_back(b);
    }
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : kv_) {
      if (!used_.contains(k)) fail("unknown key '" + k + "' for " + std::string(kind_name(kind_)));
    }
  }

 private:
  std::size_t line_;
  LayerKind kind_;
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

std::string format_real(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

LayerSpec parse_layer(std::size_t line_no, LayerKind kind, LineParser& p) {
  const std::string name = p.str("name");
  switch (kind) {
    case LayerKind::Input:
      return LayerSpec::input(name, p.count("channels"));
    case LayerKind::Conv: {
      ConvSpec c;
      const std::string bottom = p.bottoms().front();
      c.out_channels = p.count("out");
      c.kernel = p.count("k", 1);
      c.stride = p.count("s", 1);
      c.pad = p.count("p", 0);
      c.dilation = p.count("d", 1);
      c.has_bias = p.flag("bias", true);
      WeightInit init = WeightInit::Xavier;
      if (p.has("init")) {
        const std::string v = p.str("init");
        if (v == "zero") {
          init = WeightInit::Zero;
        } else if (v != "xavier") {
          p.fail("'init' expects xavier or zero, got '" + v + "'");
        }
      }
      return LayerSpec::conv(name, bottom, c, init);
    }
    case LayerKind::Relu:
      return LayerSpec::relu(name, p.bottoms().front());
    case LayerKind::Pool: {
      const std::string bottom = p.bottoms().front();
      PoolSpec s{p.count("k", 2), p.count("s", 2)};
      return LayerSpec::pool(name, bottom, s);
    }
    case LayerKind::Deconv: {
      const std::string bottom = p.bottoms().front();
      DeconvSpec d;
      d.channels = p.count("out");
      d.kernel = p.count("k", 4);
      d.stride = p.count("s", 2);
      d.frozen = p.flag("frozen", true);
      d.classwise = p.flag("classwise", true);
      return LayerSpec::deconv(name, bottom, d);
    }
    case LayerKind::Sum: {
      std::vector<std::string> bottoms = p.bottoms();
      std::vector<double> scales;
      if (p.has("scale")) {
        const std::string text = p.str("scale");
        for (std::string_view v : split(text, ',')) scales.push_back(p.real(v, "scale"));
        if (scales.size() == 1) scales.assign(bottoms.size(), scales.front());
      }
      return LayerSpec::sum(name, std::move(bottoms), std::move(scales));
    }
    case LayerKind::Crop: {
      std::vector<std::string> b = p.bottoms();
      if (b.size() != 2) p.fail("crop needs bottom=<input>,<reference>");
      return LayerSpec::crop(name, b[0], b[1]);
    }
    case LayerKind::Dropout: {
      const std::string bottom = p.bottoms().front();
      return LayerSpec::dropout(name, bottom, p.real(p.str("rate"), "rate"));
    }
  }
  throw ParseError("unhandled layer kind", line_no, "line");
}

}  // namespace

Graph parse_spec(std::string_view text) {
  Graph graph;
  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = raw.substr(0, raw.find('#'));
    const auto toks = tokens(line);
    if (toks.empty()) continue;

    const auto kind = parse_kind(toks[0]);
    if (!kind) throw ParseError("unknown layer kind '" + std::string(toks[0]) + "'", line_no, "line");
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < toks.size(); ++i) {
      const std::size_t eq = toks[i].find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ParseError("expected key=value, got '" + std::string(toks[i]) + "'", line_no, "line");
      }
      const std::string key(toks[i].substr(0, eq));
      if (!kv.emplace(key, std::string(toks[i].substr(eq + 1))).second) {
        throw ParseError("duplicate key '" + key + "'", line_no, "line");
      }
    }

    LineParser p(line_no, *kind, std::move(kv));
    LayerSpec layer = parse_layer(line_no, *kind, p);
    p.finish();
    try {
      graph.add(std::move(layer));
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no, "line");
    }
  }
  if (graph.size() == 0) throw ParseError("no layers declared", line_no, "line");
  try {
    graph.validate();
  } catch (const Error& e) {
    throw ParseError(e.what(), line_no, "line");
  }
  return graph;
}

std::string dump_spec(const Graph& graph) {
  std::ostringstream os;
  os << "# dilfcn architecture: " << graph.size() << " layers\n";
  for (const LayerSpec& l : graph.layers()) {
    os << kind_name(l.kind) << " name=" << l.name;
    if (!l.bottoms.empty()) {
      os << " bottom=";
      for (std::size_t i = 0; i < l.bottoms.size(); ++i) os << (i ? "," : "") << l.bottoms[i];
    }
    switch (l.kind) {
      case LayerKind::Input:
        os << " channels=" << l.input_params().channels;
        break;
      case LayerKind::Conv: {
        const ConvSpec& c = l.conv_spec();
        os << " out=" << c.out_channels << " k=" << c.kernel << " s=" << c.stride
           << " p=" << c.pad << " d=" << c.dilation;
        if (!c.has_bias) os << " bias=0";
        if (l.init == WeightInit::Zero) os << " init=zero";
        break;
      }
      case LayerKind::Pool:
        os << " k=" << l.pool_spec().kernel << " s=" << l.pool_spec().stride;
        break;
      case LayerKind::Deconv: {
        const DeconvSpec& d = l.deconv_spec();
        os << " out=" << d.channels << " k=" << d.kernel << " s=" << d.stride
           << " frozen=" << (d.frozen ? 1 : 0);
        if (!d.classwise) os << " classwise=0";
        break;
      }
      case LayerKind::Sum: {
        const auto* p = std::get_if<SumParams>(&l.params);
        if (p != nullptr && !p->scales.empty()) {
          os << " scale=";
          for (std::size_t i = 0; i < p->scales.size(); ++i) {
            os << (i ? "," : "") << format_real(p->scales[i]);
          }
        }
        break;
      }
      case LayerKind::Dropout:
        os << " rate=" << format_real(l.dropout_params().rate);
        break;
      default:
        break;
    }
    os << '\n';
  }
  return os.str();
}

Graph load_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open architecture file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

void save_spec(const Graph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write architecture file " + path.string());
  out << dump_spec(graph);
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace dilfcn
