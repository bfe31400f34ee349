#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dattr/dataio.hpp"
#include "dattr/keygen.hpp"
#include "dattr/metrics.hpp"
#include "dattr/registry.hpp"
#include "dattr/theory.hpp"
#include "dattr/watermark.hpp"

namespace py = pybind11;
using namespace dattr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vec to_vec(const Array& a) {
  if (a.ndim() != 1) throw Error(Errc::DimensionMismatch, "expected a 1-D array");
  return Vec(a.data(), a.data() + a.size());
}

Array to_array(const Vec& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Array to_matrix(const Vec& v, std::size_t rows, std::size_t cols) {
  Array out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

DatasetPtr make_dataset(const Array& x, const std::string& name, std::optional<double> lo, std::optional<double> hi) {
  if (x.ndim() != 2) throw Error(Errc::DimensionMismatch, "expected an (n, d) array");
  const auto n = static_cast<std::size_t>(x.shape(0)), d = static_cast<std::size_t>(x.shape(1));
  return std::make_shared<DatasetHandle>(name, n, d, Vec(x.data(), x.data() + x.size()), lo, hi);
}

}  // namespace

PYBIND11_MODULE(_dattr, m) {
  m.doc() = "Linear watermark keys, gamma search and attribution metrics.";

  // messages start with the stable code name, e.g. "Diverged: ..."
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("derive_seed", py::overload_cast<std::uint64_t, std::uint64_t>(&derive_seed), py::arg("seed"),
        py::arg("stream"));

  py::class_<ImageLayout>(m, "ImageLayout")
      .def(py::init([](int h, int w, int c, double lo, double hi) {
             ImageLayout l{h, w, c, lo, hi};
             l.validate();
             return l;
           }),
           py::arg("height"), py::arg("width"), py::arg("channels") = 1, py::arg("lo") = -1.0, py::arg("hi") = 1.0)
      .def_readonly("height", &ImageLayout::height)
      .def_readonly("width", &ImageLayout::width)
      .def_readonly("channels", &ImageLayout::channels);

  py::class_<DatasetHandle, std::shared_ptr<DatasetHandle>>(m, "Dataset")
      .def(py::init([](const Array& x, const std::string& name, std::optional<double> lo, std::optional<double> hi) {
             return std::const_pointer_cast<DatasetHandle>(make_dataset(x, name, lo, hi));
           }),
           py::arg("samples"), py::arg("name") = "array", py::arg("clamp_lo") = py::none(),
           py::arg("clamp_hi") = py::none())
      .def_property_readonly("size", &DatasetHandle::size)
      .def_property_readonly("dim", &DatasetHandle::dim)
      .def_property_readonly("name", &DatasetHandle::name)
      .def_property_readonly("fingerprint", &DatasetHandle::fingerprint)
      .def_property_readonly("samples",
                             [](const DatasetHandle& d) { return to_matrix(d.samples(), d.size(), d.dim()); })
      .def_property_readonly("labels", &DatasetHandle::labels)
      .def("set_layout", &DatasetHandle::set_layout)
      .def("mean", [](const DatasetHandle& d) { return to_array(d.mean()); });

  py::class_<Key>(m, "Key")
      .def(py::init([](const Array& v, int id) { return Key::unit(to_vec(v), id); }), py::arg("vector"),
           py::arg("id") = 0)
      .def_readonly("id", &Key::id)
      .def_property_readonly("vector", [](const Key& k) { return to_array(k.vector); })
      .def_readonly("d_max", &Key::d_max)
      .def_readonly("d_min", &Key::d_min)
      .def_readonly("compliance_fraction", &Key::compliance_fraction)
      .def("classify", [](const Key& k, const Array& x) { return classify(k, to_vec(x)); })
      .def("__repr__", [](const Key& k) {
        return "Key(id=" + std::to_string(k.id) + ", dim=" + std::to_string(k.dim()) + ")";
      });

  py::class_<NoiseModel, std::shared_ptr<NoiseModel>>(m, "NoiseModel")
      .def_static("zero", [](std::size_t d) { return std::make_shared<NoiseModel>(NoiseModel::zero(d)); })
      .def_static("isotropic",
                  [](std::size_t d, double s) { return std::make_shared<NoiseModel>(NoiseModel::isotropic(d, s)); },
                  py::arg("dim"), py::arg("sigma"))
      .def_static("diagonal",
                  [](const Array& mean, const Array& var) {
                    return std::make_shared<NoiseModel>(NoiseModel::diagonal(to_vec(mean), to_vec(var)));
                  },
                  py::arg("mean"), py::arg("variance"))
      .def_property_readonly("dim", &NoiseModel::dim)
      .def("projected_std", [](const NoiseModel& n, const Key& k) { return projected_std(n, k); });

  py::class_<WatermarkModel>(m, "WatermarkModel")
      .def(py::init([](std::shared_ptr<DatasetHandle> base, const Key& key, double gamma,
                       std::shared_ptr<NoiseModel> noise, bool clamp) {
             return WatermarkModel(base, key, gamma, noise, clamp);
           }),
           py::arg("base"), py::arg("key"), py::arg("gamma"), py::arg("noise"), py::arg("clamp") = false)
      .def_readonly("key", &WatermarkModel::key)
      .def_readonly("gamma", &WatermarkModel::gamma)
      .def_readonly("clamp", &WatermarkModel::clamp)
      .def("sample", [](const WatermarkModel& w, std::size_t n, std::uint64_t seed) {
        return to_matrix(watermark::sample(w, n, seed), n, w.key.dim());
      });

  auto kg = m.def_submodule("keygen");
  py::class_<keygen::KeygenConfig>(kg, "Config")
      .def(py::init<>())
      .def_readwrite("max_iters", &keygen::KeygenConfig::max_iters)
      .def_readwrite("batch_size", &keygen::KeygenConfig::batch_size)
      .def_readwrite("step_size", &keygen::KeygenConfig::step_size)
      .def_readwrite("orthogonality_weight", &keygen::KeygenConfig::orthogonality_weight)
      .def_readwrite("compliance_threshold", &keygen::KeygenConfig::compliance_threshold)
      .def_readwrite("seed", &keygen::KeygenConfig::seed);
  kg.def("with_stats", [](const Key& k, const DatasetHandle& d) { return keygen::with_stats(k, d); });
  kg.def("generate_keys", &keygen::generate_keys, py::arg("dataset"), py::arg("count"),
         py::arg("config") = keygen::KeygenConfig{}, py::call_guard<py::gil_scoped_release>());
  kg.def(
      "gram_matrix",
      [](const std::vector<Key>& keys) { return to_matrix(keygen::gram_matrix(keys), keys.size(), keys.size()); });
  kg.def(
      "make_equiangular_keys",
      [](const std::vector<Key>& keys, double angle) { return keygen::make_equiangular_keys(keys, angle); },
      py::arg("keys"), py::arg("angle_deg"));

  auto th = m.def_submodule("theory");
  th.def("tail_factor", &theory::tail_factor);
  th.def("min_gamma", py::overload_cast<double, double, double, double>(&theory::theorem1_min_gamma),
         py::arg("d_max"), py::arg("sigma"), py::arg("mean_projection"), py::arg("delta"));
  th.def("min_gamma_for",
         py::overload_cast<const Key&, const DatasetHandle&, const NoiseModel&, double>(&theory::theorem1_min_gamma),
         py::arg("key"), py::arg("dataset"), py::arg("noise"), py::arg("delta"));
  th.def("pair_bound", py::overload_cast<double, double, double, double, double>(&theory::theorem2_rhs),
         py::arg("d_max"), py::arg("d_min"), py::arg("sigma"), py::arg("mean_projection"), py::arg("delta"));
  th.def("attributability_lower_bound", &theory::attributability_lower_bound);
  th.def("optimal_perturbation",
         [](const Key& k, const DatasetHandle& d) { return to_array(theory::prop1_perturbation(k, d)); });

  auto wm = m.def_submodule("watermark");
  py::class_<watermark::GammaSearchConfig>(wm, "Config")
      .def(py::init<>())
      .def_readwrite("delta", &watermark::GammaSearchConfig::delta)
      .def_readwrite("alpha", &watermark::GammaSearchConfig::alpha)
      .def_readwrite("mc_samples", &watermark::GammaSearchConfig::mc_samples)
      .def_readwrite("max_rounds", &watermark::GammaSearchConfig::max_rounds)
      .def_readwrite("seed", &watermark::GammaSearchConfig::seed);
  py::class_<watermark::GammaSearchResult>(wm, "Result")
      .def_readonly("gamma", &watermark::GammaSearchResult::gamma)
      .def_readonly("model", &watermark::GammaSearchResult::model)
      .def_readonly("rounds", &watermark::GammaSearchResult::rounds)
      .def_readonly("gamma_history", &watermark::GammaSearchResult::gamma_history)
      .def_readonly("d_history", &watermark::GammaSearchResult::d_history);
  wm.def(
      "gamma_search",
      [](const Key& k, std::shared_ptr<DatasetHandle> d, std::shared_ptr<NoiseModel> n,
         const watermark::GammaSearchConfig& cfg, bool clamp) { return watermark::gamma_search(k, d, n, cfg, clamp); },
      py::arg("key"), py::arg("dataset"), py::arg("noise"), py::arg("config") = watermark::GammaSearchConfig{},
      py::arg("clamp") = false, py::call_guard<py::gil_scoped_release>());

  auto mt = m.def_submodule("metrics");
  mt.def(
      "distinguishability",
      [](const WatermarkModel& w, const DatasetHandle& d, std::size_t n, std::uint64_t seed) {
        return metrics::distinguishability(w, d, n, seed);
      },
      py::arg("model"), py::arg("dataset"), py::arg("n"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
  mt.def("distinguishability_analytic", &metrics::distinguishability_analytic);
  mt.def(
      "attributability",
      [](const std::vector<WatermarkModel>& models, const std::vector<Key>& keys, std::size_t n, std::uint64_t seed) {
        return metrics::attributability(models, keys, n, seed);
      },
      py::arg("models"), py::arg("keys"), py::arg("n"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
  mt.def("perturbation_norm", &metrics::perturbation_norm, py::arg("model"), py::arg("n"), py::arg("seed"));

  auto rg = m.def_submodule("registry");
  py::class_<registry::KeyRegistry>(rg, "KeyRegistry")
      .def(py::init<std::size_t, std::uint64_t, double>(), py::arg("dim"), py::arg("dataset_fingerprint"),
           py::arg("delta") = 0.01)
      .def("append", &registry::KeyRegistry::append, py::arg("key"), py::arg("gamma") = py::none(),
           py::arg("noise_sigma") = py::none(), py::arg("noise_mean_projection") = py::none())
      .def("revoke", &registry::KeyRegistry::revoke)
      .def("keys", &registry::KeyRegistry::keys)
      .def("__len__", &registry::KeyRegistry::size)
      .def("__eq__", [](const registry::KeyRegistry& a, const registry::KeyRegistry& b) { return a == b; })
      .def("to_json", [](const registry::KeyRegistry& r, bool b64) {
        return registry::to_json(r, b64 ? registry::VectorEncoding::Base64 : registry::VectorEncoding::Decimal);
      }, py::arg("base64") = false);
  rg.def("from_json", &registry::from_json);
  rg.def("load", &registry::load);
  rg.def("save", [](const registry::KeyRegistry& r, const std::string& path) { registry::save(r, path); });
  rg.def("attribute", [](const registry::KeyRegistry& r, const Array& x) {
    const auto v = registry::attribute(r, to_vec(x));
    py::dict out;
    out["verdict"] = registry::verdict_name(v.verdict);
    out["model_id"] = v.model_id ? py::cast(*v.model_id) : py::none();
    out["scores"] = v.scores;
    return out;
  });

  auto io = m.def_submodule("dataio");
  io.def(
      "synth_gaussian",
      [](std::size_t n, std::size_t d, const Array& center, double sigma, std::optional<std::pair<double, double>> clamp,
         std::uint64_t seed) {
        std::optional<dataio::ValueRange> range;
        if (clamp) range = dataio::ValueRange{clamp->first, clamp->second};
        return std::make_shared<DatasetHandle>(dataio::synth_gaussian(n, d, to_vec(center), sigma, range, seed));
      },
      py::arg("n"), py::arg("dim"), py::arg("center"), py::arg("sigma"), py::arg("clamp") = py::none(),
      py::arg("seed") = 0);
  io.def(
      "load_idx",
      [](const std::string& images, std::optional<std::string> labels, std::optional<std::size_t> limit) {
        return std::make_shared<DatasetHandle>(dataio::load_idx(images, labels, {}, limit));
      },
      py::arg("images"), py::arg("labels") = py::none(), py::arg("limit") = py::none());
  io.def("load_csv", [](const std::string& path) {
    return std::make_shared<DatasetHandle>(dataio::load_csv(path));
  });

  m.attr("__version__") = "0.1.0";
}
