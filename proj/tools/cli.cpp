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

#include "dilfcn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>

#include "dilfcn/analyze.hpp"
#include "dilfcn/error.hpp"
#include "dilfcn/graph.hpp"
#include "dilfcn/image_io.hpp"
#include "dilfcn/metrics.hpp"
#include "dilfcn/train.hpp"

namespace dilfcn {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t parse_count(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v == 0) {
    throw UsageError("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

/// "HxW" or a single extent for square inputs.
Shape4 parse_extent(const std::string& text, std::size_t channels) {
  const auto x = text.find('x');
  if (x == std::string::npos) {
    const std::size_t n = parse_count(text, "input extent");
    return Shape4{1, channels, n, n};
  }
  return Shape4{1, channels, parse_count(std::string_view(text).substr(0, x), "input height"),
                parse_count(std::string_view(text).substr(x + 1), "input width")};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed for " + path.string());
}

std::map<std::string, fs::path> pgm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("missing directory " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") out[e.path().stem().string()] = e.path();
  }
  return out;
}

ConfusionMatrix eval_directories(const fs::path& pred_dir, const fs::path& truth_dir,
                                 std::size_t classes) {
  const auto preds = pgm_files(pred_dir);
  const auto truths = pgm_files(truth_dir);
  if (truths.empty()) throw DataError("no label maps in " + truth_dir.string());
  std::vector<std::pair<LabelMap, LabelMap>> pairs;
  std::size_t max_label = 0;
  for (const auto& [stem, tpath] : truths) {
    const auto it = preds.find(stem);
    if (it == preds.end()) throw DataError("no prediction for '" + stem + "'");
    LabelMap p = gray_to_labels(read_pgm(it->second));
    LabelMap t = gray_to_labels(read_pgm(tpath));
    for (auto v : p.labels) max_label = std::max<std::size_t>(max_label, v);
    for (auto v : t.labels) {
      if (v != kIgnoreLabel) max_label = std::max<std::size_t>(max_label, v);
    }
    pairs.emplace_back(std::move(p), std::move(t));
  }
  ConfusionMatrix cm(classes != 0 ? classes : max_label + 1);
  for (const auto& [p, t] : pairs) cm.accumulate(p, t);
  return cm;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dilated fully convolutional segmentation networks", "dilfcn"};
  app.require_subcommand(1);
  std::function<void()> action;

  // arch dump
  CLI::App* arch = app.add_subcommand("arch", "Architecture builders");
  arch->require_subcommand(1);
  CLI::App* dump = arch->add_subcommand("dump", "Write a reference architecture spec");
  std::string family_text, out_path;
  std::size_t classes = 21, width_div = 1;
  double dropout = 0.0;
  dump->add_option("--family", family_text, "fcn8s-vgg16 | dilated-fcn2s-vgg16 | dilated-fcn2s-vgg19")
      ->required();
  dump->add_option("--classes", classes, "Number of classes")->required();
  dump->add_option("--out", out_path, "Output spec file")->required();
  dump->add_option("--width-div", width_div, "Divide backbone and fc widths");
  dump->add_option("--dropout", dropout, "Dropout rate after relu6/relu7");
  dump->callback([&] {
    action = [&] {
      const auto family = parse_family(family_text);
      if (!family) throw UsageError("unknown family '" + family_text + "'");
      BuildOptions opts;
      opts.width_divisor = width_div;
      opts.dropout = dropout;
      save_spec(build_architecture(*family, classes, opts), out_path);
      out << "wrote " << out_path << "\n";
    };
  });

  // analyze
  CLI::App* an = app.add_subcommand("analyze", "Shapes, receptive fields, parameters, memory");
  std::string spec_a, spec_b, input_text, mode_text = "inference", csv_path;
  an->add_option("spec", spec_a, "Architecture spec")->required();
  an->add_option("--input", input_text, "Input extent HxW")->required();
  an->add_option("--mode", mode_text, "inference | training");
  an->add_option("--csv", csv_path, "Write the per-layer table as CSV");
  an->callback([&] {
    action = [&] {
      if (mode_text != "inference" && mode_text != "training") {
        throw UsageError("--mode must be inference or training");
      }
      const Graph g = load_spec(spec_a);
      const AnalysisReport r = analyze(g, parse_extent(input_text, g.input_channels()));
      out << format_report(r, mode_text == "training" ? MemoryMode::Training : MemoryMode::Inference);
      if (!csv_path.empty()) write_text(csv_path, report_csv(r));
    };
  });

  // compare
  CLI::App* cmp = app.add_subcommand("compare", "Compare two architectures");
  cmp->add_option("specA", spec_a, "First spec")->required();
  cmp->add_option("specB", spec_b, "Second spec")->required();
  cmp->add_option("--input", input_text, "Input extent HxW")->required();
  cmp->add_option("--csv", csv_path, "Also write the comparison CSV here");
  cmp->callback([&] {
    action = [&] {
      const Graph a = load_spec(spec_a);
      const Graph b = load_spec(spec_b);
      const std::string csv = comparison_csv(compare(a, b, parse_extent(input_text, a.input_channels())));
      out << csv;
      if (!csv_path.empty()) write_text(csv_path, csv);
    };
  });

  // train
  CLI::App* tr = app.add_subcommand("train", "SGD training on an image/label directory");
  std::string data_dir, weights_path, init_path, history_path;
  TrainConfig cfg;
  tr->add_option("spec", spec_a, "Architecture spec")->required();
  tr->add_option("--data", data_dir, "Dataset directory (images/, labels/)")->required();
  tr->add_option("--iters", cfg.iterations, "Iterations")->required();
  tr->add_option("--lr", cfg.learning_rate, "Learning rate")->required();
  tr->add_option("--momentum", cfg.momentum, "Momentum");
  tr->add_option("--seed", cfg.seed, "Initialization and data-order seed");
  tr->add_option("--batch", cfg.batch_size, "Batch size");
  tr->add_option("--log-every", cfg.log_every, "History interval");
  tr->add_option("--init", init_path, "Start from this weight file instead of a fresh init");
  tr->add_option("--history", history_path, "Write the loss history CSV");
  tr->add_option("--out", weights_path, "Output weight file")->required();
  tr->callback([&] {
    action = [&] {
      const Graph g = load_spec(spec_a);
      const WeightStore w0 = init_path.empty() ? init_weights(g, cfg.seed) : load_weights(init_path);
      const Dataset data = load_dataset(data_dir);
      const TrainResult r = train_loop(g, w0, data, cfg);
      save_weights(r.weights, weights_path);
      if (!history_path.empty()) write_text(history_path, history_csv(r.history));
      if (!r.history.empty()) {
        out << "iteration " << r.history.back().iteration << " loss " << r.history.back().loss << "\n";
      }
      out << "wrote " << weights_path << "\n";
    };
  });

  // eval
  CLI::App* ev = app.add_subcommand("eval", "Segmentation metrics");
  std::string pred_dir, truth_dir;
  std::size_t eval_classes = 0;
  ev->add_option("spec", spec_a, "Architecture spec");
  ev->add_option("--weights", weights_path, "Weight file");
  ev->add_option("--data", data_dir, "Dataset directory");
  ev->add_option("--pred", pred_dir, "Directory of predicted label maps");
  ev->add_option("--truth", truth_dir, "Directory of ground-truth label maps");
  ev->add_option("--classes", eval_classes, "Class count for --pred/--truth (default: max label + 1)");
  ev->add_option("--csv", csv_path, "Also write the metrics CSV here");
  ev->callback([&] {
    action = [&] {
      const bool dirs = !pred_dir.empty() || !truth_dir.empty();
      const bool model = !spec_a.empty() || !weights_path.empty() || !data_dir.empty();
      ConfusionMatrix cm(1);
      if (dirs) {
        if (model || pred_dir.empty() || truth_dir.empty()) {
          throw UsageError("use either <spec> --weights --data or --pred --truth");
        }
        cm = eval_directories(pred_dir, truth_dir, eval_classes);
      } else {
        if (spec_a.empty() || weights_path.empty() || data_dir.empty()) {
          throw UsageError("eval needs <spec> --weights <file> --data <dir>");
        }
        const Graph g = load_spec(spec_a);
        cm = evaluate(g, load_weights(weights_path), load_dataset(data_dir));
      }
      const std::string csv = metrics_csv(score(cm));
      out << csv;
      if (!csv_path.empty()) write_text(csv_path, csv);
    };
  });

  // infer
  CLI::App* inf = app.add_subcommand("infer", "Predict a label map for one image");
  std::string image_path;
  inf->add_option("spec", spec_a, "Architecture spec")->required();
  inf->add_option("--weights", weights_path, "Weight file")->required();
  inf->add_option("--image", image_path, "Input PPM")->required();
  inf->add_option("--out", out_path, "Output PGM")->required();
  inf->callback([&] {
    action = [&] {
      const Graph g = load_spec(spec_a);
      const LabelMap labels = predict(g, load_weights(weights_path), image_to_tensor(read_ppm(image_path)));
      write_pgm(labels_to_gray(labels), out_path);
      out << "wrote " << out_path << " (" << labels.h << "x" << labels.w << ")\n";
    };
  });

  // gradcheck
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  bool f64 = false;
  std::uint64_t gc_seed = 0;
  GradcheckOptions gco;
  std::string loss_text = "softmax";
  gc->add_option("spec", spec_a, "Architecture spec")->required();
  gc->add_option("--input", input_text, "Input extent HxW")->required();
  gc->add_flag("--f64", f64, "Analytic gradient in 64-bit (default 32-bit)");
  gc->add_option("--seed", gc_seed, "Weights, input and label seed");
  gc->add_option("--eps", gco.eps, "Central-difference step");
  gc->add_option("--samples", gco.samples_per_blob, "Coordinates per blob");
  gc->add_option("--loss", loss_text, "softmax | squared");
  gc->callback([&] {
    action = [&] {
      if (loss_text != "softmax" && loss_text != "squared") throw UsageError("--loss must be softmax or squared");
      const Graph g = load_spec(spec_a);
      const Shape4 in = parse_extent(input_text, g.input_channels());
      gco.precision = f64 ? 64 : 32;
      gco.loss = loss_text == "softmax" ? LossKind::SoftmaxXent : LossKind::SquaredError;
      gco.seed = gc_seed;
      const GradcheckResult r =
          gradcheck(g, gradcheck_weights(g, gc_seed), make_gradcheck_sample(g, in.h, in.w, gc_seed), gco);
      const double bound = f64 ? 1e-6 : 1e-4;
      char line[256];
      std::snprintf(line, sizeof(line),
                    "precision %d\nchecked %zu\nmax_rel_error %.6e\nworst %s[%zu] analytic %.9e numeric %.9e\n",
                    gco.precision, r.checked, r.max_rel_error, r.worst_blob.c_str(), r.worst_index,
                    r.worst_analytic, r.worst_numeric);
      out << line;
      if (r.max_rel_error >= bound) throw NumericError("relative error exceeds " + std::to_string(bound));
      out << "status pass\n";
    };
  });

  // synth
  CLI::App* sy = app.add_subcommand("synth", "Generate a synthetic segmentation dataset");
  SynthConfig sc;
  sy->add_option("--out", out_path, "Output directory")->required();
  sy->add_option("--n", sc.num_images, "Number of images")->required();
  sy->add_option("--size", sc.size, "Square extent (multiple of 32)")->required();
  sy->add_option("--classes", sc.num_classes, "Number of classes including background")->required();
  sy->add_option("--seed", sc.seed, "Seed")->required();
  sy->callback([&] {
    action = [&] {
      synth_dataset(sc, out_path);
      out << "wrote " << sc.num_images << " pairs to " << out_path << "\n";
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  try {
    if (action) action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace dilfcn
