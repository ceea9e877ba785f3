#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "quirky/anomaly.hpp"
#include "quirky/cli.hpp"
#include "quirky/error.hpp"
#include "quirky/evaluation.hpp"
#include "quirky/numerics.hpp"
#include "quirky/world.hpp"

namespace py = pybind11;
using namespace quirky;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::list metas(const ActivationStore& s) {
  py::list out;
  for (const auto& m : s.metas) out.append(to_py(to_json(m)));
  return out;
}

Probe fit_probe(const std::string& method, const std::optional<Matrix>& X, const std::optional<Matrix>& pos,
                const std::optional<Matrix>& neg, const std::optional<Labels>& labels, std::uint64_t seed) {
  const Method m = method_from_string(method);
  ProbeData data;
  if (uses_contrast(m)) {
    if (!pos || !neg) throw DataError(std::string(to_string(m)) + " needs pos and neg");
    data = contrast_data(*pos, *neg);
  } else {
    if (!X) throw DataError(std::string(to_string(m)) + " needs X");
    data = single_data(*X);
  }
  ProbeOptions opts;
  opts.seed = seed;
  const Labels y = labels ? *labels : Labels::Zero(data.rows());
  Probe p = train_probe(m, data, y, opts);
  if (labels) p = resolve_sign(p, data, *labels);
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Probe training, transfer evaluation and anomaly detection on activation stores";

  auto& base = py::register_exception<Error>(m, "QuirkyError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("build_describe", &build_describe);
  m.def("cli", [](const std::vector<std::string>& args) { return cli_dispatch(args); }, py::arg("args"),
        "Runs the command-line tool in process; returns the exit code.");

  // numerics
  m.def("auroc", [](const Vector& s, const Labels& y) { return auroc(s, y); }, py::arg("scores"), py::arg("labels"));
  m.def("erase_binary_concept", [](const Matrix& X, const Labels& y) { return erase_binary_concept(X, y); },
        py::arg("X"), py::arg("concept_labels"));
  m.def("householder_reflect",
        [](const Vector& h, const Vector& w, const Vector& c) { return householder_reflect(h, w, c); }, py::arg("h"),
        py::arg("w"), py::arg("center"));
  m.def(
      "mahalanobis",
      [](const Matrix& reference, const Matrix& points, const std::string& variant) {
        return MahalanobisMetric(fit_gaussian(reference), mahalanobis_variant_from_string(variant)).rows(points);
      },
      py::arg("reference"), py::arg("points"), py::arg("variant") = "full");

  // evaluation arithmetic
  m.def("pgr", &pgr, py::arg("auroc"), py::arg("floor"), py::arg("ceil"), py::arg("epsilon") = 1e-3);
  m.def("earliest_informative_layer", &earliest_informative_layer, py::arg("auroc_by_layer"));

  // activation store
  py::class_<ActivationStore>(m, "ActivationStore")
      .def_static("read", &read_store, py::arg("path"))
      .def("write", [](const ActivationStore& s, const std::filesystem::path& p) { write_store(s, p); }, py::arg("path"))
      .def_readonly("layer_count", &ActivationStore::layer_count)
      .def_readonly("dim", &ActivationStore::dim)
      .def_readonly("dataset_name", &ActivationStore::dataset_name)
      .def("__len__", &ActivationStore::size)
      .def_property_readonly("positions",
                             [](const ActivationStore& s) {
                               std::vector<std::string> out;
                               for (Position p : s.positions) out.emplace_back(to_string(p));
                               return out;
                             })
      .def_property_readonly("metas", &metas)
      .def(
          "activations",
          [](const ActivationStore& s, int layer, const std::string& position) {
            return Matrix(s.slab(layer, position_from_string(position)).cast<double>());
          },
          py::arg("layer"), py::arg("position") = "final_prompt", "Rows for a 0-indexed layer, as float64.")
      .def(
          "labels", [](const ActivationStore& s, const std::string& set) { return all_rows(s).labels(label_set_from_string(set)); },
          py::arg("label_set") = "alice")
      .def("validate", &ActivationStore::validate);

  // synthetic world
  py::class_<WorldConfig>(m, "WorldConfig")
      .def(py::init<>())
      .def_readwrite("d", &WorldConfig::d)
      .def_readwrite("layer_count", &WorldConfig::layer_count)
      .def_readwrite("noise_sigma", &WorldConfig::noise_sigma)
      .def_readwrite("direction_seed", &WorldConfig::direction_seed)
      .def_readwrite("know_gain", &WorldConfig::know_gain)
      .def_readwrite("bob_gain", &WorldConfig::bob_gain)
      .def_readwrite("char_strength", &WorldConfig::char_strength)
      .def_readwrite("out_gain", &WorldConfig::out_gain)
      .def_readwrite("ans_strength", &WorldConfig::ans_strength)
      .def_readwrite("answer_token_offset", &WorldConfig::answer_token_offset)
      .def_readwrite("kappa", &WorldConfig::kappa)
      .def_readwrite("tau", &WorldConfig::tau)
      .def_readwrite("label_correlation", &WorldConfig::label_correlation)
      .def("to_dict", [](const WorldConfig& c) { return to_py(to_json(c)); })
      .def_static("from_dict", [](const py::object& o) { return world_config_from_json(from_py(o)); });

  m.def(
      "gen_world", [](const WorldConfig& c, std::size_t n, std::uint64_t seed) { return gen_world(c, n, seed).store; },
      py::arg("config"), py::arg("n"), py::arg("seed"));
  m.def(
      "planted_directions",
      [](const WorldConfig& c) {
        const WorldDirections d = make_directions(c);
        py::dict out;
        out["truth"] = d.truth;
        out["bob"] = d.bob;
        out["character"] = d.character;
        out["output"] = d.output;
        out["answer"] = d.answer;
        return out;
      },
      py::arg("config"));
  m.def(
      "oracle_auroc",
      [](const WorldConfig& c, const Vector& dir, int layer, const std::string& target) {
        return oracle_auroc(c, dir, layer, oracle_target_from_string(target));
      },
      py::arg("config"), py::arg("direction"), py::arg("layer"), py::arg("target") = "alice_label",
      "Expected AUROC of the readout at a 1-indexed layer.");

  // probes
  m.def(
      "train_probe",
      [](const std::string& method, const std::optional<Matrix>& X, const std::optional<Labels>& labels,
         const std::optional<Matrix>& pos, const std::optional<Matrix>& neg, std::uint64_t seed) {
        return to_py(to_json(fit_probe(method, X, pos, neg, labels, seed)));
      },
      py::arg("method"), py::arg("X") = py::none(), py::arg("labels") = py::none(), py::arg("pos") = py::none(),
      py::arg("neg") = py::none(), py::arg("seed") = 0,
      "Trains a probe and, when labels are given, orients it with Platt scaling. Returns the probe record.");
  m.def(
      "probe_scores",
      [](const py::object& record, const std::optional<Matrix>& X, const std::optional<Matrix>& pos,
         const std::optional<Matrix>& neg) {
        const Probe p = probe_from_json(from_py(record));
        const ProbeData data = uses_contrast(p.method) ? contrast_data(pos.value(), neg.value()) : single_data(X.value());
        return predict_logodds(p, data);
      },
      py::arg("probe"), py::arg("X") = py::none(), py::arg("pos") = py::none(), py::arg("neg") = py::none());

  // experiments
  m.def(
      "run_transfer",
      [](const ActivationStore& store, const std::string& experiment, const std::string& methods, std::uint64_t seed,
         int jobs) {
        TransferOptions opts;
        opts.seed = seed;
        opts.jobs = jobs;
        TransferReport r;
        {
          py::gil_scoped_release release;
          r = run_transfer(store, transfer_preset(experiment), parse_methods(methods), opts);
        }
        return to_py(to_json(r));
      },
      py::arg("store"), py::arg("experiment") = "AE-BH", py::arg("methods") = "logr", py::arg("seed") = 0,
      py::arg("jobs") = 1);
  m.def(
      "anomaly_auroc",
      [](const ActivationStore& store, const std::string& method, const std::string& variant, std::uint64_t seed) {
        AnomalyOptions opts;
        opts.seed = seed;
        const AnomalyDetector det =
            fit_detector(store, method_from_string(method), mahalanobis_variant_from_string(variant), opts);
        const AnomalyEval ev = eval_anomaly(det, store);
        py::dict out;
        out["auroc"] = ev.auroc;
        out["n_bob_hard"] = ev.n_bob_hard;
        out["n_alice_hard"] = ev.n_alice_hard;
        return out;
      },
      py::arg("store"), py::arg("method") = "logr", py::arg("variant") = "full", py::arg("seed") = 0);
}
