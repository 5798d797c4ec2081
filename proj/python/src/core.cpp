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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dilfcn/analyze.hpp"
#include "dilfcn/cli.hpp"
#include "dilfcn/graph.hpp"
#include "dilfcn/layers.hpp"
#include "dilfcn/metrics.hpp"
#include "dilfcn/train.hpp"

namespace py = pybind11;
using namespace dilfcn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() != 4) throw ShapeError("expected a 4-D (n, c, h, w) array, got " + std::to_string(a.ndim()) + "-D");
  const Shape4 s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                 static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
  return Tensor(s, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Tensor& t) {
  const Shape4 s = t.shape();
  py::array_t<float> out({s.n, s.c, s.h, s.w});
  std::copy(t.ptr(), t.ptr() + t.size(), out.mutable_data());
  return out;
}

WeightStore to_store(const py::dict& d) {
  WeightStore w;
  for (const auto& [k, v] : d) w.emplace(py::cast<std::string>(k), to_tensor(py::cast<FloatArray>(v)));
  return w;
}

py::dict to_dict(const WeightStore& w) {
  py::dict d;
  for (const auto& [k, t] : w) d[py::str(k)] = to_array(t);
  return d;
}

LabelMap to_labels(const LabelArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("label maps must be (h, w) or (n, h, w)");
  const std::size_t n = a.ndim() == 3 ? a.shape(0) : 1;
  LabelMap m(n, a.shape(a.ndim() - 2), a.shape(a.ndim() - 1));
  std::copy(a.data(), a.data() + a.size(), m.labels.begin());
  return m;
}

Family family_arg(const std::string& name) {
  const auto f = parse_family(name);
  if (!f) throw py::value_error("unknown architecture family '" + name + "'");
  return *f;
}

py::dict scores_dict(const ConfusionMatrix& cm) {
  const SegmentationScores s = score(cm);
  py::dict d;
  d["pixel_accuracy"] = s.pixel_accuracy;
  d["mean_accuracy"] = s.mean_accuracy;
  d["mean_iou"] = s.mean_iou;
  d["fw_iou"] = s.fw_iou;
  return d;
}

Shape4 input_shape(const Graph& g, std::size_t h, std::size_t w) { return Shape4{1, g.input_channels(), h, w}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dilated fully convolutional segmentation networks";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<GraphError>(m, "GraphError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::class_<Graph>(m, "Graph")
      .def("__len__", &Graph::size)
      .def_property_readonly("layer_names",
                             [](const Graph& g) {
                               std::vector<std::string> names;
                               for (const LayerSpec& l : g.layers()) names.push_back(l.name);
                               return names;
                             })
      .def("kind", [](const Graph& g, const std::string& name) { return std::string(kind_name(g.layer(name).kind)); })
      .def("count", [](const Graph& g, const std::string& kind) {
        const auto k = parse_kind(kind);
        if (!k) throw py::value_error("unknown layer kind '" + kind + "'");
        return g.count(*k);
      })
      .def_property_readonly("input_channels", &Graph::input_channels)
      .def_property_readonly("output_channels", &Graph::output_channels)
      .def_property_readonly("required_divisor", &Graph::required_divisor)
      .def("to_spec", [](const Graph& g) { return dump_spec(g); })
      .def("__eq__", [](const Graph& a, const Graph& b) { return a == b; });

  m.def(
      "build_architecture",
      [](const std::string& family, std::size_t classes, std::size_t width_divisor, double dropout) {
        BuildOptions o;
        o.width_divisor = width_divisor;
        o.dropout = dropout;
        return build_architecture(family_arg(family), classes, o);
      },
      py::arg("family"), py::arg("num_classes"), py::arg("width_divisor") = 1, py::arg("dropout") = 0.0);
  m.def("parse_spec", [](const std::string& text) { return parse_spec(text); }, py::arg("text"));
  m.def("load_spec", &load_spec, py::arg("path"));
  m.def("save_spec", &save_spec, py::arg("graph"), py::arg("path"));

  m.def("effective_kernel", &effective_kernel, py::arg("kernel"), py::arg("dilation"));
  m.def("exp_dilation_rf", &exp_dilation_rf, py::arg("i"));
  m.def(
      "receptive_field_chain",
      [](const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>& layers) {
        std::vector<ChainLayer> chain;
        for (const auto& [k, s, d] : layers) chain.push_back({k, s, d});
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const RfStep& r : receptive_field_chain(chain)) out.emplace_back(r.rf, r.jump);
        return out;
      },
      py::arg("layers"), "[(kernel, stride, dilation), ...] -> [(rf, jump), ...]");

  m.def(
      "count_parameters",
      [](const Graph& g) {
        const ParamCount c = count_parameters(g);
        py::dict layers;
        for (const LayerParams& l : c.per_layer) layers[py::str(l.name)] = py::make_tuple(l.weights, l.bias);
        py::dict groups;
        for (const ParamGroup& grp : param_groups(g, c)) groups[py::str(grp.name)] = grp.params;
        py::dict d;
        d["total"] = c.total;
        d["frozen"] = c.frozen;
        d["layers"] = layers;
        d["groups"] = groups;
        return d;
      },
      py::arg("graph"));
  m.def(
      "analyze",
      [](const Graph& g, std::size_t h, std::size_t w, const std::string& mode) {
        if (mode != "inference" && mode != "training") throw py::value_error("mode must be inference or training");
        const AnalysisReport r = analyze(g, input_shape(g, h, w));
        return format_report(r, mode == "training" ? MemoryMode::Training : MemoryMode::Inference);
      },
      py::arg("graph"), py::arg("height"), py::arg("width"), py::arg("mode") = "inference");
  m.def(
      "analysis_csv",
      [](const Graph& g, std::size_t h, std::size_t w) { return report_csv(analyze(g, input_shape(g, h, w))); },
      py::arg("graph"), py::arg("height"), py::arg("width"));
  m.def(
      "estimate_memory",
      [](const Graph& g, std::size_t h, std::size_t w, const std::string& mode) {
        if (mode != "inference" && mode != "training") throw py::value_error("mode must be inference or training");
        return estimate_memory(g, input_shape(g, h, w), mode == "training" ? MemoryMode::Training : MemoryMode::Inference)
            .total_bytes;
      },
      py::arg("graph"), py::arg("height"), py::arg("width"), py::arg("mode") = "training");
  m.def(
      "compare_csv",
      [](const Graph& a, const Graph& b, std::size_t h, std::size_t w) {
        return comparison_csv(compare(a, b, input_shape(a, h, w)));
      },
      py::arg("a"), py::arg("b"), py::arg("height"), py::arg("width"));

  m.def("init_weights", [](const Graph& g, std::uint64_t seed) { return to_dict(init_weights(g, seed)); },
        py::arg("graph"), py::arg("seed") = 0);
  m.def("save_weights", [](const py::dict& w, const std::filesystem::path& p) { save_weights(to_store(w), p); },
        py::arg("weights"), py::arg("path"));
  m.def("load_weights", [](const std::filesystem::path& p) { return to_dict(load_weights(p)); }, py::arg("path"));
  m.def(
      "encode_weights",
      [](const py::dict& w) {
        const auto bytes = encode_weights(to_store(w));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("weights"));
  m.def(
      "decode_weights",
      [](const py::bytes& b) {
        const std::string s = b;
        return to_dict(decode_weights(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
      },
      py::arg("data"));

  m.def(
      "forward",
      [](const Graph& g, const py::dict& w, const FloatArray& x) {
        const WeightStore store = to_store(w);
        const Tensor in = to_tensor(x);
        Tensor out;
        {
          py::gil_scoped_release release;
          out = forward(g, store, in, ForwardOptions{Mode::Inference, 0, false}).output;
        }
        return to_array(out);
      },
      py::arg("graph"), py::arg("weights"), py::arg("input"), "Inference-mode forward pass.");
  m.def(
      "predict",
      [](const Graph& g, const py::dict& w, const FloatArray& x) {
        const WeightStore store = to_store(w);
        const Tensor in = to_tensor(x);
        LabelMap out;
        {
          py::gil_scoped_release release;
          out = predict(g, store, in);
        }
        py::array_t<std::uint16_t> a({out.h, out.w});
        std::copy(out.labels.begin(), out.labels.end(), a.mutable_data());
        return a;
      },
      py::arg("graph"), py::arg("weights"), py::arg("image"));

  m.def(
      "confusion_matrix",
      [](const LabelArray& pred, const LabelArray& truth, std::size_t classes) {
        ConfusionMatrix cm(classes);
        cm.accumulate(to_labels(pred), to_labels(truth));
        py::array_t<std::uint64_t> out({classes, classes});
        for (std::size_t i = 0; i < classes; ++i)
          for (std::size_t j = 0; j < classes; ++j) out.mutable_at(i, j) = cm(i, j);
        return out;
      },
      py::arg("pred"), py::arg("truth"), py::arg("num_classes"), "Rows index the truth, columns the prediction.");
  m.def(
      "scores",
      [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& counts) {
        if (counts.ndim() != 2 || counts.shape(0) != counts.shape(1)) throw py::value_error("expected a square matrix");
        ConfusionMatrix cm(counts.shape(0));
        for (py::ssize_t i = 0; i < counts.shape(0); ++i)
          for (py::ssize_t j = 0; j < counts.shape(1); ++j) cm(i, j) = counts.at(i, j);
        return scores_dict(cm);
      },
      py::arg("matrix"));

  m.def(
      "train",
      [](const Graph& g, const py::dict& w0, const std::filesystem::path& data, std::size_t iterations, double lr,
         double momentum, std::size_t batch, std::uint64_t seed, std::size_t log_every) {
        TrainConfig cfg;
        cfg.iterations = iterations;
        cfg.learning_rate = lr;
        cfg.momentum = momentum;
        cfg.batch_size = batch;
        cfg.seed = seed;
        cfg.log_every = log_every;
        const WeightStore start = to_store(w0);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_loop(g, start, load_dataset(data), cfg);
        }
        std::vector<std::pair<std::size_t, double>> history;
        for (const HistoryEntry& h : r.history) history.emplace_back(h.iteration, h.loss);
        return py::make_tuple(to_dict(r.weights), history);
      },
      py::arg("graph"), py::arg("weights"), py::arg("data_dir"), py::arg("iterations"), py::arg("learning_rate") = 1e-3,
      py::arg("momentum") = 0.9, py::arg("batch_size") = 1, py::arg("seed") = 0, py::arg("log_every") = 10,
      "Returns (weights, [(iteration, loss), ...]).");
  m.def(
      "evaluate",
      [](const Graph& g, const py::dict& w, const std::filesystem::path& data) {
        return scores_dict(evaluate(g, to_store(w), load_dataset(data)));
      },
      py::arg("graph"), py::arg("weights"), py::arg("data_dir"));
  m.def(
      "synth_dataset",
      [](const std::filesystem::path& out, std::size_t n, std::size_t size, std::size_t classes, std::uint64_t seed) {
        SynthConfig c{n, size, classes, seed};
        synth_dataset(c, out);
      },
      py::arg("out_dir"), py::arg("num_images"), py::arg("size") = 64, py::arg("num_classes") = 3, py::arg("seed") = 0);

  m.def(
      "gradcheck",
      [](const Graph& g, std::size_t h, std::size_t w, int precision, std::uint64_t seed, double eps) {
        GradcheckOptions o;
        o.precision = precision;
        o.seed = seed;
        o.eps = eps;
        const GradcheckResult r = gradcheck(g, gradcheck_weights(g, seed), make_gradcheck_sample(g, h, w, seed), o);
        py::dict d;
        d["max_rel_error"] = r.max_rel_error;
        d["worst_blob"] = r.worst_blob;
        d["checked"] = r.checked;
        return d;
      },
      py::arg("graph"), py::arg("height"), py::arg("width"), py::arg("precision") = 64, py::arg("seed") = 0,
      py::arg("eps") = 1e-5);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_command(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in process; returns (exit_code, stdout, stderr).");
}
