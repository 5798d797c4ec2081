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

#include "dilfcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "dilfcn/error.hpp"
#include "dilfcn/random.hpp"

namespace dilfcn {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error("learning rate must be finite and non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0, 1)");
  if (batch_size == 0) throw Error("batch size must be positive");
  if (log_every == 0) throw Error("log_every must be positive");
}

template <typename T>
void sgd_step(BasicWeightStore<T>& weights, const BasicWeightStore<T>& grads,
              BasicWeightStore<T>& velocity, double lr, double momentum) {
  for (const auto& [name, g] : grads) {
    auto wit = weights.find(name);
    if (wit == weights.end()) throw GraphError("gradient for unknown blob '" + name + "'");
    BasicTensor<T>& w = wit->second;
    require_same_shape(w.shape(), g.shape(), "sgd_step weights/gradient");
    auto vit = velocity.find(name);
    if (vit == velocity.end()) vit = velocity.emplace(name, BasicTensor<T>(g.shape())).first;
    BasicTensor<T>& v = vit->second;
    require_same_shape(v.shape(), g.shape(), "sgd_step velocity/gradient");
    const T m = static_cast<T>(momentum);
    const T eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = m * v[i] + g[i];
      w[i] -= eta * v[i];
    }
  }
}

template void sgd_step(WeightStore&, const WeightStore&, WeightStore&, double, double);
template void sgd_step(WeightStore64&, const WeightStore64&, WeightStore64&, double, double);

Dataset load_dataset(const fs::path& dir) {
  const fs::path images = dir / "images";
  const fs::path labels = dir / "labels";
  if (!fs::is_directory(images)) throw DataError("missing directory " + images.string());
  if (!fs::is_directory(labels)) throw DataError("missing directory " + labels.string());
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  Dataset out;
  out.reserve(stems.size());
  for (const std::string& stem : stems) {
    const fs::path lp = labels / (stem + ".pgm");
    if (!fs::exists(lp)) throw DataError("no label map for image '" + stem + "'");
    const RgbImage img = read_ppm(images / (stem + ".ppm"));
    const GrayImage lab = read_pgm(lp);
    if (img.width != lab.width || img.height != lab.height) {
      throw DataError("image and label extents differ for '" + stem + "'");
    }
    out.push_back(Sample{stem, image_to_tensor(img), gray_to_labels(lab)});
  }
  return out;
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

struct Batch {
  Tensor images;
  LabelMap labels;
};

Batch stack(const Dataset& data, const std::vector<std::size_t>& idx) {
  const Shape4 s0 = data[idx[0]].image.shape();
  Batch b{Tensor(Shape4{idx.size(), s0.c, s0.h, s0.w}), LabelMap(idx.size(), s0.h, s0.w)};
  const std::size_t plane = s0.c * s0.h * s0.w;
  const std::size_t px = s0.h * s0.w;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Sample& s = data[idx[k]];
    if (!(s.image.shape() == s0)) {
      throw ShapeError("batch mixes shapes " + s0.str() + " and " + s.image.shape().str());
    }
    if (s.labels.h != s0.h || s.labels.w != s0.w || s.labels.n != 1) {
      throw ShapeError("labels of sample '" + s.stem + "' do not match its image");
    }
    std::copy(s.image.data().begin(), s.image.data().end(), b.images.ptr() + k * plane);
    std::copy(s.labels.labels.begin(), s.labels.labels.end(), b.labels.labels.begin() + k * px);
  }
  return b;
}

}  // namespace

TrainResult train_loop(const Graph& graph, const WeightStore& weights, const Dataset& dataset,
                       const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw DataError("training dataset is empty");
  check_weights(graph, weights);

  TrainResult result{weights, {}};
  WeightStore velocity;
  Rng rng(config.seed);
  std::vector<std::size_t> order;
  std::size_t pos = 0;
  double window = 0.0;
  std::size_t window_n = 0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<std::size_t> idx;
    while (idx.size() < config.batch_size) {
      if (pos == order.size()) {
        order.resize(dataset.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, rng);
        pos = 0;
      }
      idx.push_back(order[pos++]);
    }
    const Batch batch = stack(dataset, idx);
    ForwardOptions fo;
    fo.mode = Mode::Train;
    fo.dropout_seed = config.seed * 0x100000001B3ull + it;
    ForwardResult<float> fr = forward(graph, result.weights, batch.images, fo);
    LossResult<float> loss = softmax_xent_loss(fr.output, batch.labels, kIgnoreLabel);
    const WeightStore grads = backward(graph, result.weights, fr.cache, loss.grad_logits);
    sgd_step(result.weights, grads, velocity, config.learning_rate, config.momentum);

    window += loss.loss;
    ++window_n;
    if ((it + 1) % config.log_every == 0 || it + 1 == config.iterations) {
      result.history.push_back({it + 1, window / static_cast<double>(window_n)});
      window = 0.0;
      window_n = 0;
    }
  }
  return result;
}

std::string history_csv(const std::vector<HistoryEntry>& history) {
  std::string out = "iteration,loss\n";
  char buf[64];
  for (const HistoryEntry& h : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", h.iteration, h.loss);
    out += buf;
  }
  return out;
}

LabelMap argmax_labels(const Tensor& scores) {
  const Shape4& s = scores.shape();
  LabelMap out(s.n, s.h, s.w);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        std::size_t best = 0;
        float best_v = scores.at(n, 0, y, x);
        for (std::size_t c = 1; c < s.c; ++c) {
          const float v = scores.at(n, c, y, x);
          if (v > best_v) {
            best_v = v;
            best = c;
          }
        }
        out.at(n, y, x) = static_cast<std::uint16_t>(best);
      }
    }
  }
  return out;
}

namespace {

std::size_t reflect(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

std::size_t round_up(std::size_t v, std::size_t d) { return (v + d - 1) / d * d; }

}  // namespace

Tensor reflect_pad(const Tensor& image, std::size_t divisor) {
  if (divisor == 0) throw Error("pad divisor must be positive");
  const Shape4& s = image.shape();
  const std::size_t h = round_up(s.h, divisor);
  const std::size_t w = round_up(s.w, divisor);
  if (h == s.h && w == s.w) return image;
  Tensor out(Shape4{s.n, s.c, h, w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = reflect(y, s.h);
        for (std::size_t x = 0; x < w; ++x) out.at(n, c, y, x) = image.at(n, c, sy, reflect(x, s.w));
      }
    }
  }
  return out;
}

LabelMap predict(const Graph& graph, const WeightStore& weights, const Tensor& image) {
  const Shape4& s = image.shape();
  const Tensor padded = reflect_pad(image, graph.required_divisor());
  ForwardOptions fo;
  fo.mode = Mode::Inference;
  fo.keep_cache = false;
  const LabelMap full = argmax_labels(forward(graph, weights, padded, fo).output);
  if (full.h == s.h && full.w == s.w) return full;
  LabelMap out(s.n, s.h, s.w);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) out.at(n, y, x) = full.at(n, y, x);
    }
  }
  return out;
}

double dataset_loss(const Graph& graph, const WeightStore& weights, const Dataset& dataset) {
  if (dataset.empty()) throw DataError("dataset is empty");
  ForwardOptions fo;
  fo.mode = Mode::Inference;
  fo.keep_cache = false;
  double total = 0.0;
  for (const Sample& s : dataset) {
    const Tensor out = forward(graph, weights, s.image, fo).output;
    total += softmax_xent_loss(out, s.labels, kIgnoreLabel).loss;
  }
  return total / static_cast<double>(dataset.size());
}

ConfusionMatrix evaluate(const Graph& graph, const WeightStore& weights, const Dataset& dataset) {
  ConfusionMatrix cm(graph.output_channels());
  for (const Sample& s : dataset) cm.accumulate(predict(graph, weights, s.image), s.labels);
  return cm;
}

// ---------------------------------------------------------------------------

GradcheckSample make_gradcheck_sample(const Graph& graph, std::size_t height, std::size_t width,
                                      std::uint64_t seed) {
  const Shape4 in{1, graph.input_channels(), height, width};
  const Shape4 out = graph.infer_shapes(in)[graph.output_index()];
  Rng rng(seed);
  GradcheckSample s{Tensor64(in), LabelMap(out.n, out.h, out.w), Tensor64(out)};
  for (double& v : s.input.data()) v = rng.normal();
  for (auto& l : s.labels.labels) l = static_cast<std::uint16_t>(rng.below(out.c));
  for (double& v : s.target.data()) v = rng.normal();
  return s;
}

WeightStore64 gradcheck_weights(const Graph& graph, std::uint64_t seed) {
  WeightStore64 w = cast_store<double>(init_weights(graph, seed));
  Rng rng(seed ^ 0x6A09E667F3BCC909ull);
  for (const BlobInfo& blob : graph.blobs()) {
    if (blob.frozen) continue;
    Tensor64& t = w.at(blob.name);
    if (blob.is_bias) {
      for (double& v : t.data()) v = rng.uniform(-0.1, 0.1);
      continue;
    }
    const Shape4& s = blob.shape;
    const bool deconv = graph.layer(blob.layer).kind == LayerKind::Deconv;
    const double fan_in = deconv ? static_cast<double>(s.n * s.h * s.w) / 4.0
                                 : static_cast<double>(s.c * s.h * s.w);
    const double sd = std::sqrt(2.0 / fan_in);
    for (double& v : t.data()) v = sd * rng.normal();
  }
  return w;
}

namespace {

template <typename T>
LossResult<T> loss_of(const BasicTensor<T>& out, const GradcheckSample& sample, LossKind kind,
                      const BasicTensor<T>& target) {
  if (kind == LossKind::SoftmaxXent) return softmax_xent_loss(out, sample.labels, kIgnoreLabel);
  return squared_error_loss(out, target);
}

template <typename T>
WeightStore64 analytic_gradient(const Graph& graph, const WeightStore64& w64, const Tensor64& input,
                                const GradcheckSample& sample, LossKind kind) {
  const BasicWeightStore<T> w = cast_store<T>(w64);
  const BasicTensor<T> x = input.cast<T>();
  const BasicTensor<T> target = sample.target.cast<T>();
  ForwardResult<T> fr = forward(graph, w, x);
  const LossResult<T> loss = loss_of(fr.output, sample, kind, target);
  return cast_store<double>(backward(graph, w, fr.cache, loss.grad_logits));
}

double log_sum_exp(const Tensor64& z, std::size_t n, std::size_t y, std::size_t x) {
  double m = z.at(n, 0, y, x);
  for (std::size_t c = 1; c < z.shape().c; ++c) m = std::max(m, z.at(n, c, y, x));
  double s = 0.0;
  for (std::size_t c = 0; c < z.shape().c; ++c) s += std::exp(z.at(n, c, y, x) - m);
  return m + std::log(s);
}

// L(out_p) - L(out_m), differenced per pixel before summing so the result
// does not inherit the rounding of two O(1) totals.
double loss_difference(const Tensor64& out_p, const Tensor64& out_m, const GradcheckSample& sample,
                       LossKind kind) {
  const Shape4& s = out_p.shape();
  double total = 0.0;
  if (kind == LossKind::SquaredError) {
    for (std::size_t i = 0; i < out_p.size(); ++i) {
      const double dp = out_p[i] - sample.target[i];
      const double dm = out_m[i] - sample.target[i];
      total += 0.5 * (out_p[i] - out_m[i]) * (dp + dm);
    }
    return total;
  }
  std::size_t counted = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        const std::uint16_t l = sample.labels.at(n, y, x);
        if (l == kIgnoreLabel) continue;
        ++counted;
        const double lp = log_sum_exp(out_p, n, y, x) - out_p.at(n, l, y, x);
        const double lm = log_sum_exp(out_m, n, y, x) - out_m.at(n, l, y, x);
        total += lp - lm;
      }
    }
  }
  return total / static_cast<double>(counted);
}

template <typename T>
BasicWeightStore<T> round_to_float(const BasicWeightStore<T>& s) {
  return cast_store<T>(cast_store<float>(s));
}

}  // namespace

GradcheckResult gradcheck(const Graph& graph, const WeightStore64& weights,
                          const GradcheckSample& sample, const GradcheckOptions& options) {
  if (!(options.eps > 0.0)) throw Error("gradcheck eps must be positive");
  if (options.precision != 32 && options.precision != 64) throw Error("precision must be 32 or 64");

  const bool single = options.precision == 32;
  WeightStore64 w = single ? round_to_float(weights) : weights;
  const Tensor64 input = single ? sample.input.cast<float>().cast<double>() : sample.input;
  check_weights(graph, w);

  const WeightStore64 analytic = single
      ? analytic_gradient<float>(graph, w, input, sample, options.loss)
      : analytic_gradient<double>(graph, w, input, sample, options.loss);

  ActivationCache<double> cache = forward(graph, w, input).cache;

  GradcheckResult result;
  Rng rng(options.seed);
  for (const BlobInfo& blob : graph.blobs()) {
    if (blob.frozen) continue;
    Tensor64& t = w.at(blob.name);
    const Tensor64& a = analytic.at(blob.name);
    std::vector<std::size_t> coords;
    if (t.size() <= options.samples_per_blob) {
      coords.resize(t.size());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
      std::unordered_set<std::size_t> seen;
      while (coords.size() < options.samples_per_blob) {
        const std::size_t k = rng.below(t.size());
        if (seen.insert(k).second) coords.push_back(k);
      }
    }
    for (std::size_t k : coords) {
      const double orig = t[k];
      const double up = orig + options.eps;
      const double down = orig - options.eps;
      t[k] = up;
      const Tensor64 out_p = forward_from(graph, w, cache, blob.layer);
      t[k] = down;
      const Tensor64 out_m = forward_from(graph, w, cache, blob.layer);
      t[k] = orig;
      const double numeric = loss_difference(out_p, out_m, sample, options.loss) / (up - down);
      const double an = a[k];
      const double rel = std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), 1e-12});
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_blob.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        result.worst_blob = blob.name;
        result.worst_index = k;
        result.worst_analytic = an;
        result.worst_numeric = numeric;
      }
    }
    forward_from(graph, w, cache, blob.layer);
  }
  return result;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (size == 0 || size % 32 != 0) throw Error("synthetic image size must be a positive multiple of 32");
  if (num_classes < 2 || num_classes > 255) throw Error("synthetic class count must lie in [2, 255]");
}

std::array<double, 3> class_color(std::size_t cls) {
  static constexpr std::array<std::array<double, 3>, 8> kPalette{{
      {0.20, 0.20, 0.20},
      {0.85, 0.20, 0.20},
      {0.20, 0.80, 0.30},
      {0.25, 0.35, 0.90},
      {0.90, 0.85, 0.20},
      {0.80, 0.30, 0.85},
      {0.20, 0.85, 0.85},
      {0.95, 0.60, 0.20},
  }};
  if (cls < kPalette.size()) return kPalette[cls];
  Rng rng(0xC01042ull + cls);
  return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
}

std::pair<RgbImage, GrayImage> synth_pair(const SynthConfig& config, std::size_t index) {
  config.validate();
  const std::size_t n = config.size;
  Rng rng(config.seed * 0xD1B54A32D192ED03ull + (index + 1) * 0x9E3779B97F4A7C15ull);

  GrayImage label{n, n, std::vector<std::uint8_t>(n * n, 0)};
  std::vector<std::size_t> classes(config.num_classes - 1);
  std::iota(classes.begin(), classes.end(), std::size_t{1});
  shuffle(classes, rng);
  const std::size_t shapes = 1 + rng.below(std::min<std::size_t>(3, classes.size()));
  const double dn = static_cast<double>(n);
  for (std::size_t s = 0; s < shapes; ++s) {
    const auto cls = static_cast<std::uint8_t>(classes[s]);
    if (rng.below(2) == 0) {
      const double w = rng.uniform(0.2, 0.5) * dn;
      const double h = rng.uniform(0.2, 0.5) * dn;
      const double x0 = rng.uniform(0.0, dn - w);
      const double y0 = rng.uniform(0.0, dn - h);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          if (px >= x0 && px < x0 + w && py >= y0 && py < y0 + h) label.pixels[y * n + x] = cls;
        }
      }
    } else {
      const double r = rng.uniform(0.1, 0.25) * dn;
      const double cx = rng.uniform(r, dn - r);
      const double cy = rng.uniform(r, dn - r);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          if (dx * dx + dy * dy < r * r) label.pixels[y * n + x] = cls;
        }
      }
    }
  }

  std::vector<std::array<double, 3>> colors(config.num_classes);
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    colors[c] = class_color(c);
    for (double& v : colors[c]) v += rng.uniform(-0.05, 0.05);
  }
  RgbImage image{n, n, std::vector<std::uint8_t>(n * n * 3)};
  for (std::size_t i = 0; i < n * n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(colors[label.pixels[i]][c] + 0.05 * rng.normal(), 0.0, 1.0);
      image.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return {std::move(image), std::move(label)};
}

void synth_dataset(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (!ec) fs::create_directories(out_dir / "labels", ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  char stem[32];
  for (std::size_t i = 0; i < config.num_images; ++i) {
    std::snprintf(stem, sizeof(stem), "img_%05zu", i);
    const auto [image, label] = synth_pair(config, i);
    write_ppm(image, out_dir / "images" / (std::string(stem) + ".ppm"));
    write_pgm(label, out_dir / "labels" / (std::string(stem) + ".pgm"));
  }
}

}  // namespace dilfcn
