#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bdc/analysis.hpp"
#include "bdc/checkpoint.hpp"
#include "bdc/occtoy.hpp"

namespace py = pybind11;
using namespace bdc;

namespace {

Tensor<double> tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::int64_t> dims(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) dims[static_cast<std::size_t>(i)] = a.shape(i);
  Tensor<double> t{Shape(dims)};
  std::copy(a.data(), a.data() + t.size(), t.data().begin());
  return t;
}

py::array_t<double> array_from_tensor(const Tensor<double>& t) {
  std::vector<py::ssize_t> dims;
  for (int i = 0; i < t.shape().rank(); ++i) dims.push_back(t.shape().dim(i));
  py::array_t<double> out(dims);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

IntTensor labels_from_array(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::int64_t> dims(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) dims[static_cast<std::size_t>(i)] = a.shape(i);
  IntTensor t{Shape(dims)};
  std::copy(a.data(), a.data() + t.size(), t.data.begin());
  return t;
}

ConvGeometry make_geometry(std::int64_t c_in, std::int64_t c_out, int kernel, int stride, int pad,
                           std::int64_t h, std::int64_t w) {
  ConvGeometry g{c_in, c_out, kernel, stride, pad, h, w};
  g.validate();
  return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bit-packed XNOR/popcount convolution library";

  py::register_exception<Error>(m, "BdcError");

  py::class_<BitTensor>(m, "BitTensor")
      .def_property_readonly("n_valid_tail", &BitTensor::n_valid_tail)
      .def_property_readonly("shape",
                             [](const BitTensor& b) {
                               py::tuple t(b.shape().rank());
                               for (int i = 0; i < b.shape().rank(); ++i) t[i] = b.shape().dim(i);
                               return t;
                             })
      .def_property_readonly("words",
                             [](const BitTensor& b) {
                               py::array_t<std::uint64_t> out(
                                   static_cast<py::ssize_t>(b.words().size()));
                               std::copy(b.words().begin(), b.words().end(), out.mutable_data());
                               return out;
                             })
      .def("unpack", [](const BitTensor& b) { return array_from_tensor(bit_unpack_as<double>(b)); });

  m.def("bit_pack", [](const py::array_t<double>& a) { return bit_pack(tensor_from_array(a)); },
        "Pack a +-1 array into bits (1 <-> +1, LSB-first)");

  m.def(
      "popcount_dot",
      [](const py::array_t<double>& a, const py::array_t<double>& b) {
        Tensor<double> ta = tensor_from_array(a), tb = tensor_from_array(b);
        return popcount_dot(bit_pack(ta).words(), bit_pack(tb).words(), ta.size());
      },
      "Integer dot product of two +-1 vectors via XNOR/popcount");

  m.def(
      "conv2d_fp",
      [](const py::array_t<double>& x, const py::array_t<double>& w, int stride, int pad,
         double pad_value) {
        Tensor<double> xt = tensor_from_array(x), wt = tensor_from_array(w);
        ConvGeometry g{xt.shape().dim(0), wt.shape().dim(0), static_cast<int>(wt.shape().dim(2)),
                       stride, pad, xt.shape().dim(1), xt.shape().dim(2)};
        return array_from_tensor(conv2d_fp(xt, wt, g, pad_value));
      },
      py::arg("x"), py::arg("w"), py::arg("stride") = 1, py::arg("pad") = 0,
      py::arg("pad_value") = 0.0, "Reference cross-correlation with constant padding");

  m.def(
      "conv2d_bit",
      [](const py::array_t<double>& x, const py::array_t<double>& latent, int stride, int pad) {
        Tensor<double> xt = tensor_from_array(x);
        BinaryConvParams<double> params;
        params.latent = tensor_from_array(latent);
        params.refresh();
        ConvGeometry g{xt.shape().dim(0), params.latent.shape().dim(0),
                       static_cast<int>(params.latent.shape().dim(2)), stride, pad,
                       xt.shape().dim(1), xt.shape().dim(2)};
        return array_from_tensor(conv2d_bit(bit_pack(xt), params, g));
      },
      py::arg("x"), py::arg("latent"), py::arg("stride") = 1, py::arg("pad") = 0,
      "XNOR/popcount convolution of a +-1 activation against binarized latent weights");

  m.def(
      "check_equivalence",
      [](std::int64_t c_in, std::int64_t c_out, int kernel, int stride, int pad, std::int64_t h,
         std::int64_t w, std::uint64_t seed) {
        EquivalenceReport r =
            check_equivalence(make_geometry(c_in, c_out, kernel, stride, pad, h, w), seed);
        return py::make_tuple(r.max_abs_deviation, r.outputs_checked);
      },
      py::arg("c_in"), py::arg("c_out"), py::arg("kernel"), py::arg("stride"), py::arg("pad"),
      py::arg("h"), py::arg("w"), py::arg("seed") = 0);

  m.def("binarize_weights", [](const py::array_t<double>& w) {
    auto [scale, signs] = binarize_weights(tensor_from_array(w));
    return py::make_tuple(scale, array_from_tensor(bit_unpack_as<double>(signs)));
  });

  m.def("analytic_abs_error_constant", &analytic_abs_error_constant);
  m.def("erf", &erf64);

  m.def(
      "monte_carlo_abs_error",
      [](std::int64_t n, std::uint64_t seed) {
        MonteCarloResult r = monte_carlo_abs_error(n, seed);
        return py::make_tuple(r.mean, r.stderr_of_mean);
      },
      py::arg("n_samples"), py::arg("seed") = 0);

  m.def(
      "gradient_error_experiment",
      [](int k, std::int64_t channels, int trials, std::uint64_t seed) {
        GradErrorReport r = gradient_error_experiment(k, channels, trials, seed);
        py::dict d;
        d["kernel_size"] = r.kernel_size;
        d["empirical_eae"] = r.empirical_eae;
        d["predicted_eae"] = r.predicted_eae;
        d["samples"] = r.samples;
        d["relative_deviation"] = r.relative_deviation;
        d["ratio"] = r.ratio;
        return d;
      },
      py::arg("k"), py::arg("channels") = 4, py::arg("trials") = 200, py::arg("seed") = 0);

  m.def(
      "cost_of_layer",
      [](std::int64_t c_in, std::int64_t c_out, int kernel, int stride, int pad, std::int64_t h,
         std::int64_t w, bool binarized) {
        CostReport r =
            cost_of_layer(make_geometry(c_in, c_out, kernel, stride, pad, h, w), binarized);
        py::dict d;
        d["ops_f"] = r.ops_f;
        d["ops_b_x64"] = r.ops_b_x64;
        d["ops_b"] = r.ops_b();
        d["params_f"] = r.params_f;
        d["params_b_x32"] = r.params_b_x32;
        d["params_b"] = r.params_b();
        return d;
      },
      py::arg("c_in"), py::arg("c_out"), py::arg("kernel"), py::arg("stride"), py::arg("pad"),
      py::arg("h"), py::arg("w"), py::arg("binarized"));

  m.def(
      "miou",
      [](const py::array_t<std::int32_t>& pred, const py::array_t<std::int32_t>& gt, int n_class) {
        toy::MiouResult r = toy::miou(labels_from_array(pred), labels_from_array(gt), n_class);
        return py::make_tuple(r.per_class, r.present, r.mean);
      },
      py::arg("pred"), py::arg("gt"), py::arg("n_class"));

  m.def(
      "generate_scene",
      [](std::uint64_t seed, std::int64_t gx, std::int64_t gy, std::int64_t gz, int n_boxes,
         int n_class) {
        toy::ToyScene scene = toy::generate_scene(seed, Shape{gx, gy, gz}, n_boxes, n_class);
        py::dict d;
        std::vector<py::ssize_t> vdims;
        for (int i = 0; i < scene.views.shape().rank(); ++i)
          vdims.push_back(scene.views.shape().dim(i));
        py::array_t<float> views(vdims);
        std::copy(scene.views.data().begin(), scene.views.data().end(), views.mutable_data());
        d["views"] = views;
        py::array_t<std::int32_t> labels(std::vector<py::ssize_t>{gx, gy, gz});
        std::copy(scene.labels.data.begin(), scene.labels.data.end(), labels.mutable_data());
        d["labels"] = labels;
        return d;
      },
      py::arg("seed"), py::arg("grid_x") = 16, py::arg("grid_y") = 16, py::arg("grid_z") = 4,
      py::arg("n_boxes") = 3, py::arg("n_class") = 4);
}
