#include "hrm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace hrm::harness {
namespace {

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::string format_r(double r) {
  std::ostringstream os;
  os << "r=" << r;
  return os.str();
}

}  // namespace

RunData generate_run_data(const ExperimentSpec& spec, std::uint64_t seed) {
  RunData out;
  if (spec.scenario == Scenario::SelectionBias) {
    out.train = synthetic::generate_selection_bias(spec.selection, mix_seed(seed, 1));
    out.test = synthetic::generate_test_grid(spec.selection, spec.test_r_values,
                                             spec.n_test_per_env, mix_seed(seed, 2));
    return out;
  }
  const auto& ac = spec.anti_causal;
  const auto config = synthetic::default_anti_causal_config(ac.n_phi, ac.n_psi, mix_seed(seed, 3));
  auto train_specs = synthetic::dominant_env_specs(config, ac.n_train_per_env, ac.train_dominance);
  train_specs.resize(static_cast<std::size_t>(ac.n_train_envs));
  out.train = concat(synthetic::generate_anti_causal(config, train_specs, mix_seed(seed, 1)));
  out.train.seed = seed;
  out.test = synthetic::generate_anti_causal(
      config, synthetic::one_hot_env_specs(config, spec.n_test_per_env), mix_seed(seed, 2));
  out.manifest["theta_phi"] = {config.theta_phi.begin(), config.theta_phi.end()};
  out.manifest["theta_psi"] = {config.theta_psi.begin(), config.theta_psi.end()};
  return out;
}

namespace {

struct Fitted {
  LinearModel model;
  std::vector<double> agreement;
  std::optional<gates::GateVector> gate;
};

Fitted fit_method(const MethodSpec& m, const Dataset& train, std::uint64_t seed) {
  if (is_hrm(m.name)) {
    const auto state = m.name == "HRM" ? driver::run_hrm(train, hrm_config_for(m, seed))
                                       : driver::run_hrm_single(train, hrm_config_for(m, seed));
    Fitted out{state.predictor(), {}, state.gate};
    for (const auto& rec : state.history) {
      if (rec.agreement) out.agreement.push_back(*rec.agreement);
    }
    return out;
  }
  baselines::BaselineConfig cfg = m.baseline;
  cfg.method = baselines::method_from_string(m.name);
  cfg.seed = seed;
  switch (cfg.method) {
    case baselines::Method::ERM: return {baselines::fit_erm(train, cfg), {}, std::nullopt};
    case baselines::Method::DRO: return {baselines::fit_dro(train, cfg).model, {}, std::nullopt};
    case baselines::Method::IRM: {
      if (!train.env_labels) throw ConfigError("IRM requires environment labels");
      return {baselines::fit_irm(environments_from_labels(train, *train.env_labels), cfg), {}, std::nullopt};
    }
  }
  throw ConfigError("unknown method " + m.name);
}

}  // namespace

bool is_hrm(const std::string& name) { return name == "HRM" || name == "HRM^s"; }

driver::HrmConfig hrm_config_for(const MethodSpec& m, std::uint64_t method_seed) {
  driver::HrmConfig cfg = m.hrm;
  cfg.mc.seed = mix_seed(method_seed, 1);
  cfg.mp.seed = mix_seed(method_seed, 2);
  return cfg;
}

std::uint64_t method_seed(std::uint64_t run_seed, std::size_t method_index) {
  return mix_seed(run_seed, 10 + method_index);
}

MetricsReport compute_metrics(const std::vector<double>& losses) {
  if (losses.size() < 2) throw ConfigError("compute_metrics: need at least 2 environments");
  MetricsReport out;
  out.losses = losses;
  const auto n = static_cast<double>(losses.size());
  double sum = 0.0;
  for (double l : losses) sum += l;
  out.mean_error = sum / n;
  double sq = 0.0;
  for (double l : losses) sq += (l - out.mean_error) * (l - out.mean_error);
  out.std_error = std::sqrt(sq / (n - 1.0));
  out.max_error = *std::max_element(losses.begin(), losses.end());
  return out;
}

MetricsReport aggregate_runs(const std::vector<MetricsReport>& runs) {
  if (runs.empty()) throw ConfigError("aggregate_runs: no runs");
  MetricsReport out;
  std::vector<double> mean, std, max;
  for (const auto& r : runs) {
    mean.push_back(r.mean_error);
    std.push_back(r.std_error);
    max.push_back(r.max_error);
  }
  const auto n = static_cast<double>(runs.size());
  out.mean_error = sorted_sum(mean) / n;
  out.std_error = sorted_sum(std) / n;
  out.max_error = sorted_sum(max) / n;
  const std::size_t envs = runs.front().losses.size();
  out.losses.assign(envs, 0.0);
  for (std::size_t e = 0; e < envs; ++e) {
    std::vector<double> col;
    for (const auto& r : runs) col.push_back(r.losses.at(e));
    out.losses[e] = sorted_sum(col) / n;
  }
  return out;
}

std::vector<MethodSpec> default_methods(Scenario scenario) {
  driver::HrmConfig hrm;
  hrm.mc.K = scenario == Scenario::SelectionBias ? 2 : 3;
  std::vector<MethodSpec> out;
  for (const char* name : {"ERM", "DRO", "IRM", "HRM^s", "HRM"}) {
    MethodSpec m;
    m.name = name;
    m.hrm = hrm;
    out.push_back(m);
  }
  return out;
}

void ExperimentSpec::validate() const {
  if (n_runs < 1) throw ConfigError("experiment: n_runs must be >= 1");
  if (methods.empty()) throw ConfigError("experiment: no methods");
  if (n_test_per_env < 1) throw ConfigError("experiment: n_test_per_env must be >= 1");
  for (const auto& m : methods) {
    if (m.name == "HRM" || m.name == "HRM^s") {
      m.hrm.validate();
    } else {
      baselines::BaselineConfig c = m.baseline;
      c.method = baselines::method_from_string(m.name);
      c.validate();
    }
  }
  if (scenario == Scenario::SelectionBias) {
    selection.validate();
    if (test_r_values.size() < 2) throw ConfigError("experiment: need >= 2 test environments");
    for (double r : test_r_values) {
      if (!(std::abs(r) > 1.0)) throw ConfigError("experiment: test r values need |r| > 1");
    }
  } else {
    if (anti_causal.n_train_envs < 1 || anti_causal.n_train_envs > 8) {
      throw ConfigError("experiment: anti-causal needs 1..8 training environments");
    }
    if (anti_causal.n_train_per_env < 1) throw ConfigError("experiment: n_train_per_env < 1");
    if (!(anti_causal.train_dominance >= 0.0 && anti_causal.train_dominance <= 1.0)) {
      throw ConfigError("experiment: train_dominance must lie in [0, 1]");
    }
  }
}

std::optional<MetricsReport> ExperimentResult::aggregated(std::size_t method) const {
  std::vector<MetricsReport> ok;
  for (const auto& run : runs) {
    if (run.cells.at(method).metrics) ok.push_back(*run.cells[method].metrics);
  }
  if (ok.empty()) return std::nullopt;
  return aggregate_runs(ok);
}

std::vector<double> ExperimentResult::mean_env_losses(std::size_t method) const {
  std::vector<std::vector<double>> cols(env_names.size());
  for (const auto& run : runs) {
    const auto& cell = run.cells.at(method);
    if (!cell.error.empty()) continue;
    for (std::size_t e = 0; e < cols.size(); ++e) cols[e].push_back(cell.env_losses.at(e));
  }
  std::vector<double> out;
  for (auto& c : cols) {
    out.push_back(c.empty() ? std::nan("") : sorted_sum(c) / static_cast<double>(c.size()));
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t master_seed, int run) {
  return mix_seed(master_seed, 0x5EED0000ULL + static_cast<std::uint64_t>(run));
}

int worker_count(int requested, int jobs) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("HRM_LAB_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  return std::max(1, std::min(n, jobs));
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentResult result;
  result.spec = spec;
  if (spec.scenario == Scenario::SelectionBias) {
    for (std::size_t k = 0; k < spec.test_r_values.size(); ++k) {
      result.env_names.push_back(format_r(spec.test_r_values[k]));
      result.test_env_indices.push_back(static_cast<int>(k));
    }
  } else {
    for (int e = 0; e < 10; ++e) {
      result.env_names.push_back("e" + std::to_string(e + 1));
      if (e >= spec.anti_causal.n_train_envs) result.test_env_indices.push_back(e);
    }
  }
  result.runs.resize(static_cast<std::size_t>(spec.n_runs));

  auto do_run = [&](int run) {
    RunRecord& rec = result.runs[static_cast<std::size_t>(run)];
    rec.run_seed = run_seed(spec.master_seed, run);
    rec.cells.resize(spec.methods.size());
    RunData data;
    try {
      data = generate_run_data(spec, rec.run_seed);
    } catch (const std::exception& e) {
      for (auto& cell : rec.cells) cell.error = std::string("data generation: ") + e.what();
      return;
    }
    rec.manifest_vectors = data.manifest;
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      CellResult& cell = rec.cells[m];
      const auto start = std::chrono::steady_clock::now();
      try {
        const Fitted fitted = fit_method(spec.methods[m], data.train, method_seed(rec.run_seed, m));
        cell.agreement = fitted.agreement;
        cell.model = fitted.model;
        cell.gate = fitted.gate;
        for (const auto& env : data.test) {
          cell.env_losses.push_back(fitted.model.mse(env.X, env.y));
        }
        std::vector<double> test_losses;
        for (int idx : result.test_env_indices) {
          test_losses.push_back(cell.env_losses.at(static_cast<std::size_t>(idx)));
        }
        cell.metrics = compute_metrics(test_losses);
      } catch (const std::exception& e) {
        cell.error = e.what();
        cell.env_losses.clear();
        cell.agreement.clear();
        cell.metrics.reset();
      }
      cell.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };

  const int workers = worker_count(spec.threads, spec.n_runs);
  if (workers == 1) {
    for (int run = 0; run < spec.n_runs; ++run) do_run(run);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int run = next++; run < spec.n_runs; run = next++) do_run(run);
      });
    }
    for (auto& t : pool) t.join();
  }
  return result;
}

}  // namespace hrm::harness
