#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sfocda/data.hpp"
#include "sfocda/pipeline.hpp"
#include "sfocda/pseudo_label.hpp"
#include "sfocda/style_aug.hpp"

namespace py = pybind11;
using namespace sfocda;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const FloatArray& a) {
  if (a.ndim() != 4)
    throw ShapeError("expected a 4d array [n, c, h, w], got ndim " +
                     std::to_string(a.ndim()));
  Shape4 s{a.shape(0), a.shape(1), a.shape(2), a.shape(3)};
  std::vector<float> data(a.data(), a.data() + s.numel());
  return Tensor::from_data(s, std::move(data));
}

py::array_t<float> array_from(const Tensor& t) {
  const Shape4& s = t.shape();
  py::array_t<float> out(std::vector<py::ssize_t>{s.n, s.c, s.h, s.w});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

LabelMap labels_from(const ByteArray& a) {
  if (a.ndim() != 3)
    throw ShapeError("expected a 3d label array [n, h, w], got ndim " +
                     std::to_string(a.ndim()));
  LabelMap m = LabelMap::full(a.shape(0), a.shape(1), a.shape(2), 0);
  std::copy(a.data(), a.data() + m.numel(), m.labels.begin());
  return m;
}

py::array_t<uint8_t> array_from(const LabelMap& m) {
  py::array_t<uint8_t> out(std::vector<py::ssize_t>{m.n, m.h, m.w});
  std::copy(m.labels.begin(), m.labels.end(), out.mutable_data());
  return out;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict splits;
  for (const auto& s : r.splits) {
    py::dict iou;
    for (const auto& [cls, v] : s.per_class) iou[py::int_(cls)] = v;
    py::dict d;
    d["miou"] = s.miou;
    d["iou"] = iou;
    splits[py::str(s.name)] = d;
  }
  py::dict out;
  out["splits"] = splits;
  out["compound_miou"] = r.compound_miou;
  out["compound_open_miou"] = r.compound_open_miou;
  out["open_miou"] = r.open_miou;
  out["pl_coverage"] =
      r.pl_coverage >= 0.0 ? py::object(py::float_(r.pl_coverage))
                           : py::object(py::none());
  out["config_hash"] = r.config_hash;
  out["runtime_seconds"] = r.runtime_seconds;
  return out;
}

StyleVariant variant_from(const std::string& name) {
  return parse_style_variant(name);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Source-free open compound domain adaptation core operations";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

  m.attr("IGNORE_LABEL") = kIgnoreLabel;

  m.def(
      "adain",
      [](const FloatArray& content, const FloatArray& style) {
        return array_from(adain(tensor_from(content), tensor_from(style)));
      },
      py::arg("content"), py::arg("style"),
      "Re-style content features with the per-channel statistics of style.");

  m.def(
      "cpss",
      [](const FloatArray& feat, int patches, const std::string& variant,
         uint64_t seed) {
        Tensor x = tensor_from(feat);
        const Shape4& s = x.shape();
        PatchGrid grid = grid_for(patches, s.h, s.w);
        Rng rng(seed, 0);
        StyleVariant v = variant_from(variant);
        if (v == StyleVariant::intra) return array_from(cpss_intra(x, grid, rng));
        if (v == StyleVariant::inter) return array_from(cpss_inter(x, grid, rng));
        throw ConfigError("cpss variant must be intra or inter");
      },
      py::arg("feat"), py::arg("patches") = 4, py::arg("variant") = "inter",
      py::arg("seed") = 0,
      "Cross-patch style swap on a [n, c, h, w] feature batch.");

  m.def(
      "patch_style",
      [](const FloatArray& feat, int patches) {
        Tensor x = tensor_from(feat);
        const Shape4& s = x.shape();
        PatchStyle st = compute_patch_style(x, grid_for(patches, s.h, s.w));
        const std::vector<py::ssize_t> dims{st.samples, st.patches, st.channels};
        py::array_t<double> mean(dims);
        py::array_t<double> stddev(dims);
        std::copy(st.mean.begin(), st.mean.end(), mean.mutable_data());
        std::copy(st.stddev.begin(), st.stddev.end(), stddev.mutable_data());
        return py::make_tuple(mean, stddev);
      },
      py::arg("feat"), py::arg("patches") = 4,
      "Per-patch channel mean and std as [n, patches, c] arrays.");

  m.def(
      "mpt",
      [](const FloatArray& probs, double tau, double q) {
        Tensor p = tensor_from(probs);
        ClassThresholds th = mpt_thresholds(p, tau, q);
        PseudoLabelMap pl = assign_pseudo_labels(p, th);
        return py::make_tuple(array_from(pl.labels), th.t, pl.coverage);
      },
      py::arg("probs"), py::arg("tau") = 0.9, py::arg("q") = 50.0,
      "Maximum-probability-threshold pseudo-labels: (labels, thresholds, "
      "coverage).");

  m.def(
      "miou",
      [](const ByteArray& gt, const ByteArray& pred, int num_classes) {
        IouAccumulator acc(num_classes);
        acc.add(labels_from(gt), labels_from(pred));
        py::dict per_class;
        for (const auto& [cls, v] : acc.per_class())
          per_class[py::int_(cls)] = v;
        return py::make_tuple(acc.miou(), per_class);
      },
      py::arg("gt"), py::arg("pred"), py::arg("num_classes"),
      "Mean IoU over classes present in gt, ignoring label 255.");

  m.def(
      "gen_data",
      [](const std::filesystem::path& out_dir, uint64_t seed, int train,
         int test, int size) {
        SceneSpec spec;
        spec.size = size;
        GenerationCounts counts;
        counts.train_per_domain = train;
        counts.test_per_domain = test;
        DatasetManifest man =
            generate_domains(spec, default_domains(), counts, seed, out_dir);
        return man.samples.size();
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("train") = 200,
      py::arg("test") = 50, py::arg("size") = 64,
      "Render the synthetic multi-domain dataset; returns the sample count.");

  m.def(
      "train_source",
      [](const std::filesystem::path& config, const std::filesystem::path& out) {
        RunResult r = train_source(load_config(config), out);
        py::dict d = report_dict(r.report);
        d["checkpoint"] = r.checkpoint.string();
        return d;
      },
      py::arg("config"), py::arg("out"),
      "Stage I supervised source training; returns the metrics report.");

  m.def(
      "adapt_target",
      [](const std::filesystem::path& config,
         const std::filesystem::path& checkpoint,
         const std::filesystem::path& out) {
        RunResult r = adapt_target(load_config(config), checkpoint, out);
        py::dict d = report_dict(r.report);
        d["checkpoint"] = r.checkpoint.string();
        return d;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"),
      "Stage II source-free self-training; returns the metrics report.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint,
         const std::filesystem::path& data,
         const std::vector<std::string>& splits) {
        return report_dict(evaluate(checkpoint, data, splits));
      },
      py::arg("checkpoint"), py::arg("data"),
      py::arg("splits") = std::vector<std::string>{},
      "Score a checkpoint on labeled test splits (all of them by default).");

  m.def(
      "stylize",
      [](const std::vector<std::filesystem::path>& images,
         const std::filesystem::path& out, std::pair<int, int> grid,
         const std::string& variant, uint64_t seed, bool identity, bool png) {
        StylizeOptions opt;
        opt.grid_h = grid.first;
        opt.grid_w = grid.second;
        opt.variant = variant_from(variant);
        opt.seed = seed;
        opt.identity = identity;
        opt.write_png = png;
        std::vector<std::string> names;
        for (const auto& p : stylize(images, out, opt))
          names.push_back(p.string());
        return names;
      },
      py::arg("images"), py::arg("out"), py::arg("grid") = std::pair<int, int>{2, 4},
      py::arg("variant") = "inter", py::arg("seed") = 0,
      py::arg("identity") = false, py::arg("png") = true,
      "Patch-style-swap stored image tensors; returns the output paths.");

  m.def(
      "style_embed",
      [](const std::filesystem::path& checkpoint,
         const std::filesystem::path& data, const std::filesystem::path& out,
         int k, uint64_t seed) { style_embed(checkpoint, data, out, k, seed); },
      py::arg("checkpoint"), py::arg("data"), py::arg("out"), py::arg("k") = 0,
      py::arg("seed") = 0,
      "Export style embeddings and cluster ids of the compound training split.");

  m.def(
      "config_hash",
      [](const std::string& text) { return config_hash(parse_config_text(text)); },
      py::arg("text"),
      "Hash of a config's settings; independent of the data directory.");
}
