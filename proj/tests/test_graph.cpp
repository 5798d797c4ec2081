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

#include <doctest.h>

#include <bit>
#include <cstring>
#include <string>
#include <vector>

#include "dilfcn/graph.hpp"
#include "dilfcn/random.hpp"
#include "dilfcn/train.hpp"
#include "layer_checks.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dilfcn;

namespace {

ConvSpec conv(std::size_t out, std::size_t k = 1, std::size_t pad = 0) {
  ConvSpec c;
  c.out_channels = out;
  c.kernel = k;
  c.pad = pad;
  return c;
}

constexpr Family kFamilies[] = {Family::Fcn8sVgg16Baseline, Family::DilatedFcn2sVgg16,
                                Family::DilatedFcn2sVgg19};

Tensor random_input(const Shape4& s, std::uint64_t seed) {
  Rng rng(seed);
  return oracle::random_tensor(s, rng).cast<float>();
}

bool bit_equal(const WeightStore& a, const WeightStore& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    const auto it = b.find(name);
    if (it == b.end() || !(it->second.shape() == t.shape())) return false;
    if (std::memcmp(t.ptr(), it->second.ptr(), t.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("structural validation") {
  Graph g;
  CHECK_THROWS_AS(g.add(LayerSpec::relu("r", "data")), GraphError);
  g.add(LayerSpec::input("data", 3));
  CHECK_THROWS_AS(g.add(LayerSpec::input("data2", 3)), GraphError);
  CHECK_THROWS_AS(g.add(LayerSpec::relu("data", "data")), GraphError);
  CHECK_THROWS_AS(g.add(LayerSpec::relu("r", "nowhere")), GraphError);
  CHECK_THROWS_AS(g.add(LayerSpec::sum("s", {"data"})), GraphError);
  g.add(LayerSpec::conv("a", "data", conv(4)));
  g.add(LayerSpec::conv("b", "data", conv(5)));
  CHECK_THROWS_AS(g.output_index(), GraphError);
  CHECK_THROWS_AS(g.add(LayerSpec::sum("s", {"a", "b"})), GraphError);

  Graph ok;
  ok.add(LayerSpec::input("data", 3));
  ok.add(LayerSpec::conv("a", "data", conv(4)));
  ok.add(LayerSpec::conv("b", "data", conv(4)));
  ok.add(LayerSpec::sum("s", {"a", "b"}, {1.0, 2.0}));
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.output_index() == 3);
  CHECK(ok.consumers()[0] == std::vector<std::size_t>{1, 2});
}

TEST_CASE("spec text round trip") {
  for (Family f : kFamilies) {
    BuildOptions opt;
    opt.dropout = f == Family::DilatedFcn2sVgg16 ? 0.5 : 0.0;
    opt.skip_scales = {0.25, 1.0, 3.5, 1e-3};
    const Graph g = build_architecture(f, 21, opt);
    const std::string text = dump_spec(g);
    const Graph back = parse_spec(text);
    CHECK(back == g);
    CHECK(dump_spec(back) == text);
  }

  support::TempDir dir;
  const Graph g = build_architecture(Family::DilatedFcn2sVgg19, 5);
  save_spec(g, dir / "net.spec");
  CHECK(load_spec(dir / "net.spec") == g);
  CHECK_THROWS_AS(load_spec(dir / "missing.spec"), DataError);
}

TEST_CASE("spec parser") {
  const Graph g = parse_spec(
      "# comment\n"
      "input name=data channels=2\n"
      "\n"
      "conv name=c bottom=data k=3 s=1 p=2 d=2 out=4   # trailing\n"
      "relu name=r bottom=c\n"
      "deconv name=u bottom=r k=4 s=2 out=4 frozen=0\n");
  REQUIRE(g.size() == 4);
  CHECK(g.layer("c").conv_spec().dilation == 2);
  CHECK(g.layer("c").conv_spec().effective_kernel() == 5);
  CHECK_FALSE(g.layer("u").deconv_spec().frozen);

  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      (void)parse_spec(text);
    } catch (const ParseError& e) {
      return e.offset();
    }
    return 0;
  };
  CHECK(line_of("input name=data channels=3\nwidget name=x bottom=data\n") == 2);
  CHECK(line_of("relu name=x bottom=data\n") == 1);
  CHECK(line_of("input name=data channels=3\nconv name=c bottom=data k3\n") == 2);
  CHECK(line_of("input name=data channels=3\n\nrelu name=r bottom=ghost\n") == 3);
  CHECK(line_of("input name=data channels=3\nconv name=c bottom=data k=3 k=3 out=1\n") == 2);
  CHECK(line_of("# nothing\n") > 0);
}

TEST_CASE("builders") {
  CHECK(parse_family("dilated-fcn2s-vgg19") == Family::DilatedFcn2sVgg19);
  CHECK(parse_family("fcn8s_vgg16_baseline") == Family::Fcn8sVgg16Baseline);
  CHECK_FALSE(parse_family("resnet").has_value());
  CHECK_THROWS_AS(build_architecture(Family::DilatedFcn2sVgg19, 1), GraphError);

  const Graph d19 = build_architecture(Family::DilatedFcn2sVgg19, 21);
  CHECK(d19.count(LayerKind::Deconv) == 5);
  CHECK(d19.count(LayerKind::Sum) == 4);
  CHECK(d19.count(LayerKind::Pool) == 5);
  CHECK(d19.output_channels() == 21);
  const ConvSpec& fc6 = d19.layer("fc6").conv_spec();
  CHECK(fc6.kernel == 3);
  CHECK(fc6.dilation == 3);
  CHECK(fc6.pad == 3);
  CHECK(fc6.out_channels == 4096);
  for (std::size_t i = 0; i < d19.size(); ++i) {
    const LayerSpec& l = d19.layer(i);
    if (l.kind == LayerKind::Deconv) {
      CHECK(l.deconv_spec().kernel == 4);
      CHECK(l.deconv_spec().stride == 2);
      CHECK(l.deconv_spec().frozen);
      CHECK(l.deconv_spec().classwise);
    }
  }
  // Skips fuse pool4, pool3, pool2, pool1 in that order.
  std::vector<std::string> fused;
  for (const LayerSpec& l : d19.layers())
    if (l.kind == LayerKind::Sum) fused.push_back(l.name);
  CHECK(fused == std::vector<std::string>{"fuse_pool4", "fuse_pool3", "fuse_pool2", "fuse_pool1"});

  const Graph d16 = build_architecture(Family::DilatedFcn2sVgg16, 21);
  std::size_t backbone = 0;
  for (const LayerSpec& l : d16.layers()) backbone += l.name.rfind("conv", 0) == 0;
  CHECK(backbone == 13);
  CHECK(d16.contains("fc6"));
  CHECK(d16.contains("fc7"));

  const Graph base = build_architecture(Family::Fcn8sVgg16Baseline, 21);
  CHECK(base.count(LayerKind::Sum) == 2);
  CHECK(base.count(LayerKind::Deconv) == 3);
  bool found = false;
  for (const BlobInfo& b : base.blobs()) {
    if (b.name == "fc6.w") {
      CHECK(b.shape == Shape4{4096, 512, 7, 7});
      found = true;
    }
  }
  CHECK(found);

  BuildOptions narrow;
  narrow.width_divisor = 8;
  CHECK(build_architecture(Family::DilatedFcn2sVgg16, 3, narrow).layer("fc6").conv_spec().out_channels == 512);
  narrow.width_divisor = 7;
  CHECK_THROWS_AS(build_architecture(Family::DilatedFcn2sVgg16, 3, narrow), GraphError);
}

TEST_CASE("output resolution equals input resolution") {
  for (Family f : kFamilies) {
    const Graph g = build_architecture(f, 21);
    CHECK(g.required_divisor() == 32);
    for (std::size_t h : {32, 64, 224})
      for (std::size_t w : {32, 64, 224}) {
        const auto shapes = g.infer_shapes(Shape4{1, 3, h, w});
        CHECK(shapes[g.output_index()] == Shape4{1, 21, h, w});
      }
  }
  BuildOptions narrow;
  narrow.width_divisor = 8;
  for (Family f : kFamilies) {
    const Graph g = build_architecture(f, 4, narrow);
    const WeightStore w = init_weights(g, 1);
    for (std::size_t s : {32, 64, 224}) {
      const auto r = forward(g, w, random_input(Shape4{1, 3, s, s}, s), ForwardOptions{Mode::Inference, 0, false});
      CHECK(r.output.shape() == Shape4{1, 4, s, s});
    }
    try {
      (void)forward(g, w, Tensor(Shape4{1, 3, 100, 100}));
      FAIL("expected a divisibility error");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("pad") != std::string::npos);
    }
  }
}

TEST_CASE("missing blobs are named") {
  BuildOptions narrow;
  narrow.width_divisor = 8;
  const Graph g = build_architecture(Family::DilatedFcn2sVgg16, 3, narrow);
  WeightStore w = init_weights(g, 0);
  w.erase("fc7.b");
  try {
    (void)forward(g, w, Tensor(Shape4{1, 3, 32, 32}));
    FAIL("expected a missing-blob error");
  } catch (const GraphError& e) {
    CHECK(std::string(e.what()).find("fc7.b") != std::string::npos);
  }
  w = init_weights(g, 0);
  w["fc7.w"] = Tensor(Shape4{1, 1, 1, 1});
  CHECK_THROWS_AS(check_weights(g, w), GraphError);
}

TEST_CASE("initialization") {
  const Graph g = build_architecture(Family::DilatedFcn2sVgg19, 21);
  const WeightStore a = init_weights(g, 42);
  const WeightStore b = init_weights(g, 42);
  CHECK(bit_equal(a, b));
  CHECK_FALSE(bit_equal(a, init_weights(g, 43)));

  for (const char* head : {"score_pool4", "score_pool3", "score_pool2", "score_pool1"}) {
    for (float v : a.at(std::string(head) + ".w").data()) REQUIRE(v == 0.0f);
    for (float v : a.at(std::string(head) + ".b").data()) REQUIRE(v == 0.0f);
  }
  CHECK(approx_equal(a.at("upscore3.w"), make_bilinear_kernel(4, 21, true), 0.0));
  CHECK_FALSE(a.contains("upscore3.b"));

  const Tensor& w = a.at("conv2_1.w");
  const double bound = std::sqrt(6.0 / (64.0 * 9.0 + 128.0 * 9.0));
  double lo = 0, hi = 0;
  for (float v : w.data()) {
    lo = std::min<double>(lo, v);
    hi = std::max<double>(hi, v);
  }
  CHECK(hi <= bound);
  CHECK(lo >= -bound);
  CHECK(hi > 0.9 * bound);
  for (float v : a.at("conv2_1.b").data()) CHECK(v == 0.0f);
}

TEST_CASE("zero skip heads leave the output unchanged") {
  BuildOptions with;
  with.width_divisor = 8;
  BuildOptions without = with;
  without.skip_scales = {0.0, 0.0, 0.0, 0.0};
  const Graph g1 = build_architecture(Family::DilatedFcn2sVgg16, 3, with);
  const Graph g0 = build_architecture(Family::DilatedFcn2sVgg16, 3, without);
  const WeightStore w = init_weights(g1, 5);
  const Tensor x = random_input(Shape4{1, 3, 64, 64}, 9);
  const Tensor y1 = forward(g1, w, x).output;
  const Tensor y0 = forward(g0, w, x).output;
  CHECK(std::memcmp(y1.ptr(), y0.ptr(), y1.size() * sizeof(float)) == 0);
}

TEST_CASE("backward contracts") {
  BuildOptions narrow;
  narrow.width_divisor = 8;
  const Graph g = build_architecture(Family::DilatedFcn2sVgg16, 3, narrow);
  const WeightStore w = init_weights(g, 2);
  const auto fwd = forward(g, w, random_input(Shape4{1, 3, 32, 32}, 3));
  const WeightStore grads = backward(g, w, fwd.cache, Tensor(fwd.output.shape()));
  std::size_t expected = 0;
  for (const BlobInfo& b : g.blobs()) {
    if (b.frozen) {
      CHECK_FALSE(grads.contains(b.name));
    } else {
      ++expected;
      REQUIRE(grads.contains(b.name));
      CHECK(grads.at(b.name).shape() == b.shape);
      for (float v : grads.at(b.name).data()) REQUIRE(v == 0.0f);
    }
  }
  CHECK(grads.size() == expected);
  CHECK_FALSE(grads.contains("upscore1.w"));

  ActivationCache<float> partial = fwd.cache;
  partial.complete = false;
  CHECK_THROWS(backward(g, w, partial, fwd.output));
  CHECK_THROWS(backward(g, w, fwd.cache, Tensor(Shape4{1, 3, 16, 16})));
}

TEST_CASE("forward_from reproduces a full forward") {
  const Graph g = checks::composed_graph();
  const WeightStore64 w = gradcheck_weights(g, 4);
  const GradcheckSample s = make_gradcheck_sample(g, 8, 8, 4);
  auto fwd = forward(g, w, s.input);
  WeightStore64 w2 = w;
  w2.at("conv2.w")[3] += 0.5;
  const Tensor64 again = forward_from(g, w2, fwd.cache, g.index_of("conv2"));
  const Tensor64 fresh = forward(g, w2, s.input).output;
  CHECK(approx_equal(again, fresh, 0.0));
}

GradcheckResult check_graph(const Graph& g, std::uint64_t seed, int precision) {
  const WeightStore64 w = gradcheck_weights(g, seed);
  const GradcheckSample s = make_gradcheck_sample(g, 8, 8, seed + 100);
  GradcheckOptions opt;
  opt.seed = seed;
  opt.precision = precision;
  return gradcheck(g, w, s, opt);
}

TEST_CASE("whole-graph gradients match central differences in double") {
  for (const Graph& g : {checks::toy_graph(), checks::composed_graph()}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const GradcheckResult r = check_graph(g, seed, 64);
      INFO("seed " << seed << " worst " << r.worst_blob << "[" << r.worst_index << "]");
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < 1e-6);
    }
  }
}

TEST_CASE("toy graph gradients match central differences in single precision") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GradcheckResult r = check_graph(checks::toy_graph(), seed, 32);
    INFO("seed " << seed << " worst " << r.worst_blob << "[" << r.worst_index << "] "
                 << r.worst_analytic << " vs " << r.worst_numeric);
    CHECK(r.max_rel_error < 1e-4);
  }
}

// Float storage rounding of activations and gradients leaves an absolute
// error near 1e-9 on every coordinate, so coordinates whose gradient nearly
// cancels to 1e-5 exceed the relative bound on a few seeds.
TEST_CASE("composed graph gradients match central differences in single precision" * doctest::may_fail()) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GradcheckResult r = check_graph(checks::composed_graph(), seed, 32);
    INFO("seed " << seed << " worst " << r.worst_blob << "[" << r.worst_index << "] "
                 << r.worst_analytic << " vs " << r.worst_numeric);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("weight file round trip") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    WeightStore store;
    const std::size_t blobs = rng.below(6);
    for (std::size_t b = 0; b < blobs; ++b) {
      Shape4 s{1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
      Tensor t(s);
      for (float& v : t.data()) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next()) & 0xFF7FFFFFu);
      store.emplace("blob_" + std::to_string(b) + (rng.below(2) ? ".w" : ".b"), std::move(t));
    }
    const auto bytes = encode_weights(store);
    const WeightStore back = decode_weights(bytes);
    CHECK(bit_equal(store, back));
    for (const auto& [name, t] : store) CHECK(approx_equal(t, back.at(name), 0.0));
  }

  const auto empty = encode_weights({});
  CHECK(empty == std::vector<std::uint8_t>{'D', 'F', 'K', 'W', 1, 0, 0, 0, 0, 0});
  CHECK(decode_weights(empty).empty());

  support::TempDir dir;
  BuildOptions narrow;
  narrow.width_divisor = 16;
  const WeightStore w = init_weights(build_architecture(Family::DilatedFcn2sVgg19, 21, narrow), 8);
  save_weights(w, dir / "w.bin");
  CHECK(bit_equal(load_weights(dir / "w.bin"), w));
  CHECK_THROWS_AS(load_weights(dir / "absent.bin"), DataError);
}

TEST_CASE("malformed weight files report offsets") {
  WeightStore store;
  store.emplace("a.w", Tensor(Shape4{2, 3, 1, 1}, 1.5f));
  const auto good = encode_weights(store);
  auto offset_of = [](std::vector<std::uint8_t> bytes) -> std::size_t {
    try {
      (void)decode_weights(bytes);
    } catch (const ParseError& e) {
      return e.offset();
    }
    return SIZE_MAX;
  };
  for (std::size_t len = 0; len < good.size(); ++len) {
    const std::size_t at = offset_of(std::vector<std::uint8_t>(good.begin(), good.begin() + len));
    REQUIRE(at != SIZE_MAX);
    CHECK(at <= len);
  }
  auto bad = good;
  bad[2] = 'X';
  CHECK(offset_of(bad) == 2);
  bad = good;
  bad[4] = 2;
  CHECK(offset_of(bad) == 4);
  bad = good;
  bad.push_back(0);
  CHECK(offset_of(bad) == good.size());
  bad = good;
  // Header 10 bytes, name length 2, name 3, rank 1: first extent at 16.
  bad[16] = 0;
  CHECK(offset_of(bad) == 16);
  bad = good;
  bad[15] = 9;
  CHECK(offset_of(bad) == 15);
}

TEST_CASE("named weight import") {
  const Graph dil = build_architecture(Family::DilatedFcn2sVgg16, 21);
  const Graph base = build_architecture(Family::Fcn8sVgg16Baseline, 21);
  const WeightStore target = init_weights(dil, 1);
  const WeightStore donor = init_weights(base, 2);

  const auto same = import_named_weights(target, target, {{"conv1_1.w", "conv1_1.w"}, {"fc7.b", "fc7.b"}});
  CHECK(bit_equal(same.store, target));
  CHECK(same.copied.size() == 2);

  const auto rep = import_named_weights(target, donor, {{"fc6.w", "fc6.w"}, {"conv1_1.w", "conv1_1.w"}});
  CHECK(rep.mismatches.size() == 1);
  CHECK(rep.mismatches[0].find("fc6.w") != std::string::npos);
  CHECK(approx_equal(rep.store.at("fc6.w"), target.at("fc6.w"), 0.0));
  CHECK(approx_equal(rep.store.at("conv1_1.w"), donor.at("conv1_1.w"), 0.0));

  CHECK(bit_equal(import_named_weights(target, donor, {}).store, target));
  CHECK_THROWS_AS(import_named_weights(target, donor, {{"fc6.w", "nope.w"}}), DataError);
}

}
