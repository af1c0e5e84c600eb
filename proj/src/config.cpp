#include "hrm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace hrm::config {

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const Json* section(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string init_name(clustering::InitStrategy s) {
  switch (s) {
    case clustering::InitStrategy::KMeansPlusPlus: return "kmeans++";
    case clustering::InitStrategy::RegressionPlusPlus: return "regression++";
    case clustering::InitStrategy::Random: break;
  }
  return "random";
}

clustering::InitStrategy init_from(const std::string& s) {
  if (s == "kmeans++") return clustering::InitStrategy::KMeansPlusPlus;
  if (s == "regression++") return clustering::InitStrategy::RegressionPlusPlus;
  if (s == "random") return clustering::InitStrategy::Random;
  throw ConfigError("mc.init_strategy: unknown value '" + s + "'");
}

std::string optimizer_name(gates::Optimizer o) {
  return o == gates::Optimizer::Adam ? "adam" : "gd";
}

gates::Optimizer optimizer_from(const std::string& s) {
  if (s == "adam") return gates::Optimizer::Adam;
  if (s == "gd") return gates::Optimizer::GradientDescent;
  throw ConfigError("mp.optimizer: unknown value '" + s + "'");
}

std::string convert_name(driver::ConvertMode c) {
  return c == driver::ConvertMode::Soft ? "soft" : "hard";
}

driver::ConvertMode convert_from(const std::string& s) {
  if (s == "soft") return driver::ConvertMode::Soft;
  if (s == "hard") return driver::ConvertMode::HardThreshold;
  throw ConfigError("hrm.convert: unknown value '" + s + "'");
}

void mc_fields(Fields& f, clustering::McConfig& c) {
  std::string init = init_name(c.init_strategy);
  f.get("K", c.K);
  f.get("sigma_y", c.sigma_y);
  f.get("em_iters", c.em_iters);
  f.get("inner_fit_iters", c.inner_fit_iters);
  f.get("init_strategy", init);
  f.get("restarts", c.restarts);
  f.get("seed", c.seed);
  f.get("min_responsibility", c.min_responsibility);
  f.get("tol", c.tol);
  c.init_strategy = init_from(init);
}

void mp_fields(Fields& f, gates::MpConfig& c) {
  std::string opt = optimizer_name(c.optimizer);
  f.get("lambda", c.lambda);
  f.get("alpha", c.alpha);
  f.get("sigma_gate", c.sigma_gate);
  f.get("learning_rate", c.learning_rate);
  f.get("lr_decay", c.lr_decay);
  f.get("epochs", c.epochs);
  f.get("mc_samples", c.mc_samples);
  f.get("penalty_warmup", c.penalty_warmup);
  f.get("optimizer", opt);
  f.get("seed", c.seed);
  c.optimizer = optimizer_from(opt);
}

}  // namespace

std::string scenario_name(harness::Scenario s) {
  return s == harness::Scenario::SelectionBias ? "selection-bias" : "anti-causal";
}

harness::Scenario scenario_from_name(const std::string& name) {
  if (name == "selection-bias") return harness::Scenario::SelectionBias;
  if (name == "anti-causal") return harness::Scenario::AntiCausal;
  throw ConfigError("scenario: unknown value '" + name + "'");
}

Json to_json(const synthetic::SelectionBiasConfig& c) {
  return Json{{"d", c.d},
              {"n_phi", c.n_phi},
              {"n_b", c.n_b},
              {"r", c.r},
              {"beta", c.beta},
              {"sum", c.sum},
              {"kappa", c.kappa},
              {"r_minor", c.r_minor},
              {"noise_std", c.noise_std},
              {"max_attempts_factor", c.max_attempts_factor}};
}

Json to_json(const clustering::McConfig& c) {
  return Json{{"K", c.K},
              {"sigma_y", c.sigma_y},
              {"em_iters", c.em_iters},
              {"inner_fit_iters", c.inner_fit_iters},
              {"init_strategy", init_name(c.init_strategy)},
              {"restarts", c.restarts},
              {"seed", c.seed},
              {"min_responsibility", c.min_responsibility},
              {"tol", c.tol}};
}

Json to_json(const gates::MpConfig& c) {
  return Json{{"lambda", c.lambda},
              {"alpha", c.alpha},
              {"sigma_gate", c.sigma_gate},
              {"learning_rate", c.learning_rate},
              {"lr_decay", c.lr_decay},
              {"epochs", c.epochs},
              {"mc_samples", c.mc_samples},
              {"penalty_warmup", c.penalty_warmup},
              {"optimizer", optimizer_name(c.optimizer)},
              {"seed", c.seed}};
}

Json to_json(const driver::HrmConfig& c) {
  return Json{{"rounds", c.rounds},
              {"convert", convert_name(c.convert)},
              {"tau", c.tau},
              {"stop_tol", c.stop_tol},
              {"warm_start", c.warm_start},
              {"stochastic_assignment", c.stochastic_assignment},
              {"mc", to_json(c.mc)},
              {"mp", to_json(c.mp)}};
}

Json to_json(const baselines::BaselineConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"irm_lambda", c.irm_lambda},
              {"dro_gamma", c.dro_gamma},
              {"dro_inner_steps", c.dro_inner_steps},
              {"dro_inner_lr", c.dro_inner_lr},
              {"seed", c.seed}};
}

Json to_json(const harness::AntiCausalSetup& c) {
  return Json{{"n_phi", c.n_phi},
              {"n_psi", c.n_psi},
              {"n_train_envs", c.n_train_envs},
              {"n_train_per_env", c.n_train_per_env},
              {"train_dominance", c.train_dominance}};
}

Json to_json(const harness::ExperimentSpec& spec) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["scenario"] = scenario_name(spec.scenario);
  j["n_runs"] = spec.n_runs;
  j["master_seed"] = spec.master_seed;
  j["n_test_per_env"] = spec.n_test_per_env;
  j["selection"] = to_json(spec.selection);
  j["test_r_values"] = spec.test_r_values;
  j["anti_causal"] = to_json(spec.anti_causal);
  Json names = Json::array();
  for (const auto& m : spec.methods) names.push_back(m.name);
  j["methods"] = names;
  // Family-wide settings are taken from the first method of each family.
  for (const auto& m : spec.methods) {
    if (harness::is_hrm(m.name) && !j.contains("hrm")) j["hrm"] = to_json(m.hrm);
    if (!harness::is_hrm(m.name) && !j.contains("baseline")) j["baseline"] = to_json(m.baseline);
  }
  return j;
}

void from_json(const Json& j, synthetic::SelectionBiasConfig& c) {
  Fields f(j, "selection");
  f.get("d", c.d);
  f.get("n_phi", c.n_phi);
  f.get("n_b", c.n_b);
  f.get("r", c.r);
  f.get("beta", c.beta);
  f.get("sum", c.sum);
  f.get("kappa", c.kappa);
  f.get("r_minor", c.r_minor);
  f.get("noise_std", c.noise_std);
  f.get("max_attempts_factor", c.max_attempts_factor);
  f.finish();
}

void from_json(const Json& j, clustering::McConfig& c) {
  Fields f(j, "mc");
  mc_fields(f, c);
  f.finish();
}

void from_json(const Json& j, gates::MpConfig& c) {
  Fields f(j, "mp");
  mp_fields(f, c);
  f.finish();
}

void from_json(const Json& j, driver::HrmConfig& c) {
  Fields f(j, "hrm");
  std::string convert = convert_name(c.convert);
  f.get("rounds", c.rounds);
  f.get("convert", convert);
  f.get("tau", c.tau);
  f.get("stop_tol", c.stop_tol);
  f.get("warm_start", c.warm_start);
  f.get("stochastic_assignment", c.stochastic_assignment);
  if (const Json* mc = f.section("mc")) from_json(*mc, c.mc);
  if (const Json* mp = f.section("mp")) from_json(*mp, c.mp);
  f.finish();
  c.convert = convert_from(convert);
}

void from_json(const Json& j, baselines::BaselineConfig& c) {
  Fields f(j, "baseline");
  f.get("learning_rate", c.learning_rate);
  f.get("epochs", c.epochs);
  f.get("irm_lambda", c.irm_lambda);
  f.get("dro_gamma", c.dro_gamma);
  f.get("dro_inner_steps", c.dro_inner_steps);
  f.get("dro_inner_lr", c.dro_inner_lr);
  f.get("seed", c.seed);
  f.finish();
}

void from_json(const Json& j, harness::AntiCausalSetup& c) {
  Fields f(j, "anti_causal");
  f.get("n_phi", c.n_phi);
  f.get("n_psi", c.n_psi);
  f.get("n_train_envs", c.n_train_envs);
  f.get("n_train_per_env", c.n_train_per_env);
  f.get("train_dominance", c.train_dominance);
  f.finish();
}

harness::ExperimentSpec experiment_from_json(const Json& j) {
  Fields f(j, "config");
  int version = 0;
  f.get("schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion));
  }
  harness::ExperimentSpec spec;
  std::string scenario = scenario_name(spec.scenario);
  f.get("scenario", scenario);
  spec.scenario = scenario_from_name(scenario);
  f.get("n_runs", spec.n_runs);
  f.get("master_seed", spec.master_seed);
  f.get("n_test_per_env", spec.n_test_per_env);
  f.get("threads", spec.threads);
  f.get("test_r_values", spec.test_r_values);
  if (const Json* s = f.section("selection")) from_json(*s, spec.selection);
  if (const Json* a = f.section("anti_causal")) from_json(*a, spec.anti_causal);

  spec.methods = harness::default_methods(spec.scenario);
  std::vector<std::string> names;
  for (const auto& m : spec.methods) names.push_back(m.name);
  f.get("methods", names);

  driver::HrmConfig hrm = spec.methods.back().hrm;
  baselines::BaselineConfig baseline;
  if (const Json* h = f.section("hrm")) from_json(*h, hrm);
  if (const Json* b = f.section("baseline")) from_json(*b, baseline);
  f.finish();

  std::vector<harness::MethodSpec> chosen;
  for (const auto& name : names) {
    if (!harness::is_hrm(name)) baselines::method_from_string(name);  // throws on unknown
    harness::MethodSpec m;
    m.name = name;
    m.hrm = hrm;
    m.baseline = baseline;
    chosen.push_back(std::move(m));
  }
  spec.methods = std::move(chosen);
  spec.validate();
  return spec;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

harness::ExperimentSpec load_experiment(const std::string& path) {
  return experiment_from_json(read_json_file(path));
}

}  // namespace hrm::config
