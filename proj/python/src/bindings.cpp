#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "cellpk/augment.hpp"
#include "cellpk/error.hpp"
#include "cellpk/metric.hpp"
#include "cellpk/models.hpp"
#include "cellpk/pipeline.hpp"
#include "cellpk/train.hpp"
#include "cellpk/weights_io.hpp"

namespace py = pybind11;
using namespace cellpk;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Patch to_patch(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw UsageError("expected an H x W x 3 uint8 array");
  Patch p(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(p.data.data(), a.data(), p.data.size());
  return p;
}

U8Array from_patch(const Patch& p) {
  U8Array a({static_cast<py::ssize_t>(p.height), static_cast<py::ssize_t>(p.width), py::ssize_t{3}});
  std::memcpy(a.mutable_data(), p.data.data(), p.data.size());
  return a;
}

py::array_t<bool> from_mask(const Mask& m) {
  py::array_t<bool> a({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
  auto* out = a.mutable_data();
  for (std::size_t i = 0; i < m.data.size(); ++i) out[i] = m.data[i] != 0;
  return a;
}

py::dict pk_dict(const PkReport& r) {
  py::dict d;
  d["pk"] = r.pk;
  d["pairs"] = r.n_pairs_considered;
  d["concordant"] = r.concordant;
  d["discordant"] = r.discordant;
  d["pred_ties"] = r.ties_pred_only;
  return d;
}

py::dict config_dict(const TrainConfig& c) {
  py::dict d;
  d["learning_rate"] = c.learning_rate;
  d["epochs"] = c.max_epochs;
  d["batch_size"] = c.batch_size;
  d["early_stopping_patience"] = c.early_stop_patience;
  d["split"] = c.train_fraction;
  d["optimizer"] = c.optimizer;
  d["loss"] = c.loss;
  return d;
}

// N x H x W x 3 uint8 images -> dataset at the model's input resolution.
Dataset images_to_dataset(const U8Array& images, const std::vector<double>& labels, int resolution) {
  if (images.ndim() != 4 || images.shape(3) != 3) throw UsageError("expected an N x H x W x 3 uint8 array");
  const auto n = static_cast<std::size_t>(images.shape(0));
  if (!labels.empty() && labels.size() != n) throw UsageError("one label per image required");
  const auto h = static_cast<int>(images.shape(1)), w = static_cast<int>(images.shape(2));
  const std::size_t stride = static_cast<std::size_t>(h) * w * 3;
  Dataset d(3, resolution, resolution);
  for (std::size_t i = 0; i < n; ++i) {
    Patch p(w, h);
    std::memcpy(p.data.data(), images.data() + i * stride, stride);
    d.add(std::to_string(i), prepare_input(p, resolution), {labels.empty() ? 0.0 : labels[i]});
  }
  return d;
}

struct PyModel {
  ModelGraph graph;
  ModelKind kind = ModelKind::tiny_deep;
  int resolution = 0;

  std::vector<float> predict(const U8Array& images) const {
    return cellpk::predict(graph, images_to_dataset(images, {}, resolution));
  }

  py::list train(const U8Array& x, const std::vector<double>& y, const U8Array& vx, const std::vector<double>& vy,
                 const std::string& preset_name, std::optional<int> epochs, std::uint64_t seed) {
    TrainConfig cfg = preset(preset_name);
    if (epochs) cfg.max_epochs = *epochs;
    cfg.seed = seed;
    const TrainLog log =
        cellpk::train(graph, images_to_dataset(x, y, resolution), images_to_dataset(vx, vy, resolution), cfg);
    py::list out;
    for (const auto& e : log.epochs) {
      py::dict d;
      d["epoch"] = e.epoch;
      d["train_loss"] = e.train_loss;
      d["val_loss"] = e.val_loss;
      d["val_pk"] = e.val_pk ? py::cast(*e.val_pk) : py::none();
      out.append(d);
    }
    return out;
  }
};

}  // namespace

PYBIND11_MODULE(_cellpk, m) {
  m.doc() = "Cellularity regression toolkit";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def(
      "pk",
      [](const std::vector<double>& ref, const std::vector<double>& pred, double eps) {
        return pk_dict(cellpk::pk(ref, pred, eps));
      },
      py::arg("reference"), py::arg("prediction"), py::arg("tie_epsilon") = 0.0);
  m.def(
      "average_pk",
      [](const std::vector<std::vector<double>>& cols, const std::vector<double>& pred) {
        const AveragePk a = cellpk::average_pk(cols, pred);
        py::list raters;
        for (const auto& r : a.per_rater) raters.append(pk_dict(r));
        return py::make_tuple(a.mean_pk, raters);
      },
      py::arg("reference_columns"), py::arg("prediction"));
  m.def("bootstrap_average_pk", &bootstrap_average_pk, py::arg("reference_columns"), py::arg("prediction"),
        py::arg("resamples"), py::arg("seed"));
  m.def(
      "kendall_tau_b", [](const std::vector<double>& x, const std::vector<double>& y) { return kendall_tau_b(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "t_test",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::string& variant) {
        const auto r = unpaired_t_test(a, b, parse_ttest_variant(variant));
        py::dict d;
        d["t"] = r.t_statistic;
        d["df"] = r.degrees_of_freedom;
        d["p"] = r.p_two_tailed;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("variant") = "welch");

  m.def(
      "rotate_lossless",
      [](const U8Array& img, int degrees) {
        const auto r = cellpk::rotate_lossless(to_patch(img), RotationAngle(degrees));
        return py::make_tuple(from_patch(r.image), from_mask(r.valid_crop_mask));
      },
      py::arg("image"), py::arg("degrees"), "Returns (rotated image, cropped-fit validity mask).");
  m.def(
      "rotate_right_angle",
      [](const U8Array& img, int degrees) {
        return from_patch(cellpk::rotate_right_angle(to_patch(img), RotationAngle(degrees)));
      },
      py::arg("image"), py::arg("degrees"));
  m.def(
      "sample_session_angles",
      [](std::uint64_t seed, int session_index, const std::set<int>& ledger) {
        std::vector<int> out;
        for (auto a : cellpk::sample_session_angles(seed, session_index, ledger)) out.push_back(a.degrees());
        return out;
      },
      py::arg("seed"), py::arg("session_index"), py::arg("ledger") = std::set<int>{});
  m.def(
      "synthesize_patch",
      [](std::uint64_t seed, int index, int size) {
        const auto s = cellpk::synthesize_patch(seed, index, size);
        return py::make_tuple(from_patch(s.image), s.label);
      },
      py::arg("seed"), py::arg("index"), py::arg("size") = 64, "Returns (image, cellularity label).");
  m.def(
      "read_ppm", [](const std::filesystem::path& p) { return from_patch(cellpk::read_ppm(p)); }, py::arg("path"));
  m.def(
      "write_ppm", [](const U8Array& img, const std::filesystem::path& p) { cellpk::write_ppm(to_patch(img), p); },
      py::arg("image"), py::arg("path"));
  m.def("presets", [] {
    py::dict d;
    for (const auto& [name, cfg] : cellpk::presets()) d[py::str(name)] = config_dict(cfg);
    return d;
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& kind, int resolution, std::uint64_t seed) {
             PyModel pm;
             pm.kind = parse_model_kind(kind);
             pm.resolution = resolution;
             pm.graph = build_model(pm.kind, resolution, seed);
             return pm;
           }),
           py::arg("kind"), py::arg("resolution"), py::arg("seed") = 0)
      .def_static(
          "load",
          [](const std::filesystem::path& p, std::optional<int> resolution) {
            const auto tensors = read_tensor_file(p);
            PyModel pm;
            pm.kind = detect_model_kind(tensors);
            pm.graph = graph_from_weights(tensors, resolution);
            pm.resolution = static_cast<int>(pm.graph.node(pm.graph.nodes().front().name).output_shape[1]);
            return pm;
          },
          py::arg("path"), py::arg("resolution") = std::nullopt)
      .def("save", [](const PyModel& pm, const std::filesystem::path& p) { save_weights(pm.graph, p); })
      .def_property_readonly("kind", [](const PyModel& pm) { return model_kind_name(pm.kind); })
      .def_readonly("resolution", &PyModel::resolution)
      .def_property_readonly("penultimate_width",
                             [](const PyModel& pm) {
                               return pm.graph.node(pm.graph.penultimate_node()).output_shape[0];
                             })
      .def("predict", &PyModel::predict, py::arg("images"), "N x H x W x 3 uint8 images -> predictions.")
      .def("train", &PyModel::train, py::arg("images"), py::arg("labels"), py::arg("val_images"),
           py::arg("val_labels"), py::arg("preset") = "deep", py::arg("epochs") = std::nullopt, py::arg("seed") = 0,
           "Trains in place and returns one record per epoch.");

  m.def(
      "fuse",
      [](const PyModel& a, const PyModel& b, std::uint64_t seed) {
        PyModel pm;
        pm.kind = ModelKind::fused;
        pm.resolution = a.resolution;
        pm.graph = cellpk::fuse(a.graph, b.graph, seed);
        return pm;
      },
      py::arg("a"), py::arg("b"), py::arg("seed") = 0);
}
