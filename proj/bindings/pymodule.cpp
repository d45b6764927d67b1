#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pyraflow/colorize.hpp"
#include "pyraflow/flowio.hpp"
#include "pyraflow/image_io.hpp"
#include "pyraflow/metrics.hpp"
#include "pyraflow/selfcheck.hpp"
#include "pyraflow/synthetic.hpp"
#include "pyraflow/warp.hpp"

namespace py = pybind11;
using namespace pyraflow;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& arr) {
  Shape shape(static_cast<size_t>(arr.ndim()));
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<size_t>(i)] =
      static_cast<int>(arr.shape(i));
  std::vector<float> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> arr(shape);
  std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
  return arr;
}

py::dict weights_to_dict(const ModelWeights& w) {
  py::dict d;
  for (const auto& name : w.names()) d[py::str(name)] = to_array(w.at(name));
  return d;
}

ModelWeights weights_from_dict(const py::dict& d) {
  ModelWeights w;
  for (auto item : d)
    w.add(py::cast<std::string>(item.first), to_tensor(py::cast<FloatArray>(item.second)));
  return w;
}

ModelConfig make_config(float width_scale, uint64_t seed) {
  ModelConfig cfg;
  cfg.width_scale = width_scale;
  cfg.seed = seed;
  return cfg;
}

} // namespace

PYBIND11_MODULE(pyraflow, m) {
  m.doc() = "Pyramidal optical-flow engine: coarse-to-fine estimation with "
            "descriptor matching, sub-pixel refinement, and feature-driven "
            "flow regularization.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // Core operators (arrays are (C,H,W) float32; flows are (2,H,W)).
  m.def(
      "warp",
      [](const FloatArray& feature, const FloatArray& flow) {
        return to_array(f_warp(to_tensor(feature), to_tensor(flow)));
      },
      py::arg("feature"), py::arg("flow"),
      "Bilinear displacement of a (C,H,W) feature map by a (2,H,W) flow.");

  m.def(
      "cost_volume",
      [](const FloatArray& f1, const FloatArray& f2, int radius, int stride) {
        return to_array(cost_volume(to_tensor(f1), to_tensor(f2), MatchConfig{radius, stride}));
      },
      py::arg("f1"), py::arg("f2"), py::arg("radius") = 3, py::arg("stride") = 1,
      "Correlation cost volume over displacements |d| <= radius.");

  m.def(
      "local_conv",
      [](const FloatArray& field, const FloatArray& filters) {
        return to_array(f_lconv(to_tensor(field), to_tensor(filters)));
      },
      py::arg("field"), py::arg("filters"),
      "Per-position local convolution with a (w*w,H,W) filter bank.");

  m.def(
      "build_filters",
      [](const FloatArray& dist) { return to_array(build_filters(to_tensor(dist))); },
      py::arg("dist"), "Softmax of -D^2 over the channel column.");

  m.def(
      "occlusion_map",
      [](const FloatArray& im1, const FloatArray& im2, const FloatArray& flow) {
        return to_array(occlusion_map(to_tensor(im1), to_tensor(im2), to_tensor(flow)));
      },
      py::arg("im1"), py::arg("im2"), py::arg("flow"),
      "Brightness error between warp(im2, flow) and im1.");

  m.def(
      "build_pyramid",
      [](const FloatArray& image, const py::dict& weights, float width_scale) {
        ModelConfig cfg = make_config(width_scale, 0);
        ModelWeights w = weights_from_dict(weights);
        FeaturePyramid pyr = build_pyramid(to_tensor(image), w, cfg);
        py::list out;
        for (int k = 1; k <= 6; ++k) out.append(to_array(pyr.level(k)));
        return out;
      },
      py::arg("image"), py::arg("weights"), py::arg("width_scale") = 1.0f,
      "Six-level feature pyramid of a (3,H,W) image.");

  // Model-level entry points.
  m.def(
      "init_weights",
      [](float width_scale, uint64_t seed) {
        ModelConfig cfg = make_config(width_scale, seed);
        std::mt19937_64 rng(seed);
        return weights_to_dict(init_weights(cfg, rng));
      },
      py::arg("width_scale") = 1.0f, py::arg("seed") = 7,
      "Freshly initialized weights for the full cascade.");

  m.def(
      "estimate",
      [](const FloatArray& im1, const FloatArray& im2, const py::dict& weights,
         float width_scale) {
        ModelConfig cfg = make_config(width_scale, 0);
        ModelWeights w = weights_from_dict(weights);
        validate_weights(w, cfg);
        return to_array(forward(to_tensor(im1), to_tensor(im2), w, cfg).flow);
      },
      py::arg("im1"), py::arg("im2"), py::arg("weights"), py::arg("width_scale") = 1.0f,
      "Full-resolution flow for a pair of (3,H,W) images in [0,1].");

  m.def(
      "parameter_count",
      [](const py::dict& weights) { return weights_from_dict(weights).parameter_count(); },
      py::arg("weights"));

  // Metrics and visualization.
  m.def(
      "aee",
      [](const FloatArray& est, const FloatArray& gt) {
        return aee(to_tensor(est), to_tensor(gt));
      },
      py::arg("est"), py::arg("gt"), "Average end-point error.");

  m.def(
      "fl_all",
      [](const FloatArray& est, const FloatArray& gt) {
        return fl_all(to_tensor(est), to_tensor(gt));
      },
      py::arg("est"), py::arg("gt"), "Outlier percentage (EPE >= 3 px and >= 5%).");

  m.def(
      "colorize",
      [](const FloatArray& flow, std::optional<float> max_mag) {
        return to_array(colorize(to_tensor(flow), max_mag));
      },
      py::arg("flow"), py::arg("max_mag") = std::nullopt,
      "Direction-hue / magnitude-saturation rendering of a flow field.");

  // File I/O.
  m.def("read_flo", [](const std::string& path) { return to_array(read_flo(path)); },
        py::arg("path"));
  m.def(
      "write_flo",
      [](const std::string& path, const FloatArray& flow) { write_flo(path, to_tensor(flow)); },
      py::arg("path"), py::arg("flow"));
  m.def("read_weights",
        [](const std::string& path) { return weights_to_dict(read_weights(path)); },
        py::arg("path"));
  m.def(
      "write_weights",
      [](const std::string& path, const py::dict& weights) {
        write_weights(path, weights_from_dict(weights));
      },
      py::arg("path"), py::arg("weights"));
  m.def("read_image", [](const std::string& path) { return to_array(read_image(path)); },
        py::arg("path"));
  m.def(
      "write_image_png",
      [](const std::string& path, const FloatArray& image) {
        write_image_png(path, to_tensor(image));
      },
      py::arg("path"), py::arg("image"));

  // Synthetic data.
  m.def(
      "make_synthetic_dataset",
      [](int count, int size, float max_displacement, uint64_t seed, bool piecewise) {
        SyntheticSpec spec{count, size, max_displacement, seed, piecewise};
        py::list out;
        for (const TrainSample& s : make_synthetic_dataset(spec))
          out.append(py::make_tuple(to_array(s.im1), to_array(s.im2), to_array(s.gt)));
        return out;
      },
      py::arg("count"), py::arg("size") = 64, py::arg("max_displacement") = 4.0f,
      py::arg("seed") = 7, py::arg("piecewise") = false,
      "List of (im1, im2, gt_flow) tuples with exact ground truth.");

  m.def(
      "selfcheck",
      [](bool use_double, int seeds, const std::string& only) {
        CheckOptions opt;
        opt.use_double = use_double;
        opt.seeds = seeds;
        opt.only = only;
        py::list out;
        for (const CheckResult& r : run_all_checks(opt)) {
          py::dict d;
          d["name"] = r.name;
          d["pass"] = r.pass;
          d["value"] = r.value;
          d["limit"] = r.limit;
          out.append(d);
        }
        return out;
      },
      py::arg("use_double") = false, py::arg("seeds") = 5, py::arg("only") = std::string(),
      "Gradient/oracle/invariant suites; one record per check.");

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
