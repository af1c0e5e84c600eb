#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hrm/config.hpp"
#include "hrm/io.hpp"
#include "hrm/properties.hpp"

namespace py = pybind11;
using namespace hrm;
using config::Json;

namespace {

// Configs cross the boundary as JSON text so the Python side shares the
// exact schema and validation of the command-line tool.
template <typename T>
T parse_config(const std::string& text) {
  T out;
  if (!text.empty()) config::from_json(Json::parse(text), out);
  out.validate();
  return out;
}

Dataset make_dataset(const Matrix& X, const Vector& y, const std::optional<IndexVector>& env) {
  Dataset d;
  d.X = X;
  d.y = y;
  d.env_labels = env;
  d.validate();
  return d;
}

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  out["X"] = d.X;
  out["y"] = d.y;
  out["env"] = d.env_labels ? py::cast(*d.env_labels) : py::none();
  out["invariant_dims"] = d.invariant_dims ? py::cast(*d.invariant_dims) : py::none();
  out["seed"] = d.seed;
  return out;
}

py::dict model_dict(const LinearModel& m) {
  py::dict out;
  out["theta"] = m.theta;
  out["intercept"] = m.intercept;
  return out;
}

py::dict generate_selection(const std::string& cfg_text, std::uint64_t seed) {
  const auto cfg = parse_config<synthetic::SelectionBiasConfig>(cfg_text);
  return dataset_dict(synthetic::generate_selection_bias(cfg, seed));
}

py::list generate_selection_tests(const std::string& cfg_text, const std::vector<double>& r_values,
                                  int n_per_env, std::uint64_t seed) {
  const auto cfg = parse_config<synthetic::SelectionBiasConfig>(cfg_text);
  py::list out;
  for (const auto& d : synthetic::generate_test_grid(cfg, r_values, n_per_env, seed)) {
    out.append(dataset_dict(d));
  }
  return out;
}

py::dict run_hrm(const Matrix& X, const Vector& y, const std::string& cfg_text,
                 const std::optional<IndexVector>& env) {
  const auto cfg = parse_config<driver::HrmConfig>(cfg_text);
  driver::HrmState state;
  {
    py::gil_scoped_release release;
    state = driver::run_hrm(make_dataset(X, y, env), cfg);
  }
  py::dict out = model_dict(state.predictor());
  out["mask"] = gates::hard_mask(state.gate);
  out["mu"] = state.gate.mu;
  out["sigma_gate"] = state.gate.sigma_gate;
  out["W"] = state.partition.W;
  out["hard_labels"] = state.partition.hard_labels;
  out["rounds"] = state.round;
  py::list history;
  for (const auto& r : state.history) {
    py::dict h;
    h["mask"] = r.mask;
    h["mp_objective"] = r.mp_objective;
    h["mc_objective"] = r.mc_objective;
    h["agreement"] = r.agreement ? py::cast(*r.agreement) : py::none();
    history.append(h);
  }
  out["history"] = history;
  return out;
}

py::dict fit_baseline(const std::string& method, const Matrix& X, const Vector& y,
                      const std::optional<IndexVector>& env, const std::string& cfg_text) {
  auto cfg = parse_config<baselines::BaselineConfig>(cfg_text);
  cfg.method = baselines::method_from_string(method);
  const Dataset d = make_dataset(X, y, env);
  py::gil_scoped_release release;
  LinearModel m;
  switch (cfg.method) {
    case baselines::Method::ERM:
      m = baselines::fit_erm(d, cfg);
      break;
    case baselines::Method::IRM:
      if (!env) throw ConfigError("IRM needs environment labels");
      m = baselines::fit_irm(environments_from_labels(d, *env), cfg);
      break;
    case baselines::Method::DRO:
      m = baselines::fit_dro(d, cfg).model;
      break;
  }
  py::gil_scoped_acquire acquire;
  return model_dict(m);
}

double mse(const Vector& theta, double intercept, const Matrix& X, const Vector& y) {
  if (theta.size() != X.cols()) throw ConfigError("theta length does not match X");
  return LinearModel{theta, intercept}.mse(X, y);
}

py::dict metrics(const std::vector<double>& losses) {
  const auto m = harness::compute_metrics(losses);
  py::dict out;
  out["mean_error"] = m.mean_error;
  out["std_error"] = m.std_error;
  out["max_error"] = m.max_error;
  return out;
}

std::string run_experiment(const std::string& spec_text) {
  const auto spec = config::experiment_from_json(Json::parse(spec_text));
  harness::ExperimentResult result;
  {
    py::gil_scoped_release release;
    result = harness::run_experiment(spec);
  }
  return io::experiment_manifest(result).dump();
}

std::string default_config(const std::string& kind) {
  if (kind == "selection") return config::to_json(synthetic::SelectionBiasConfig{}).dump();
  if (kind == "hrm") return config::to_json(driver::HrmConfig{}).dump();
  if (kind == "baseline") return config::to_json(baselines::BaselineConfig{}).dump();
  if (kind == "experiment") {
    harness::ExperimentSpec spec;
    spec.methods = harness::default_methods(spec.scenario);
    return config::to_json(spec).dump();
  }
  throw ConfigError("unknown config kind: " + kind);
}

py::list selftest(std::uint64_t seed) {
  py::list out;
  for (const auto& p : properties::run_property_suite(seed)) {
    out.append(py::make_tuple(p.name, p.passed, p.detail));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Heterogeneous risk minimization core";
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);

  m.def("generate_selection", &generate_selection, py::arg("config"), py::arg("seed"));
  m.def("generate_selection_tests", &generate_selection_tests, py::arg("config"), py::arg("r_values"),
        py::arg("n_per_env"), py::arg("seed"));
  m.def("run_hrm", &run_hrm, py::arg("X"), py::arg("y"), py::arg("config"), py::arg("env") = py::none());
  m.def("fit_baseline", &fit_baseline, py::arg("method"), py::arg("X"), py::arg("y"),
        py::arg("env") = py::none(), py::arg("config") = "");
  m.def("mse", &mse, py::arg("theta"), py::arg("intercept"), py::arg("X"), py::arg("y"));
  m.def("metrics", &metrics, py::arg("losses"));
  m.def("run_experiment", &run_experiment, py::arg("spec"));
  m.def("default_config", &default_config, py::arg("kind"));
  m.def("selftest", &selftest, py::arg("seed") = 0);
}
