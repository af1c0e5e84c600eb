#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hrm/baselines.hpp"
#include "hrm/driver.hpp"
#include "hrm/synthetic.hpp"

namespace hrm::harness {

struct MetricsReport {
  std::vector<double> losses;
  double mean_error = 0.0;
  double std_error = 0.0;
  double max_error = 0.0;
};

/// Mean, unbiased standard deviation and maximum over >= 2 environment losses.
MetricsReport compute_metrics(const std::vector<double>& losses);

/// Averages each field over runs. Sums are taken over sorted values so the
/// result does not depend on run order.
MetricsReport aggregate_runs(const std::vector<MetricsReport>& runs);

enum class Scenario { SelectionBias, AntiCausal };

/// Method names used in tables: ERM, DRO, IRM, HRM^s, HRM.
struct MethodSpec {
  std::string name;
  baselines::BaselineConfig baseline;
  driver::HrmConfig hrm;
};

std::vector<MethodSpec> default_methods(Scenario scenario);

bool is_hrm(const std::string& name);

/// Seed of method `method_index` within a run.
std::uint64_t method_seed(std::uint64_t run_seed, std::size_t method_index);

/// The HRM configuration actually used for a method seed (Mc and Mp seeds
/// derived from it).
driver::HrmConfig hrm_config_for(const MethodSpec& m, std::uint64_t method_seed);

struct AntiCausalSetup {
  int n_phi = 9;
  int n_psi = 1;
  int n_train_envs = 3;
  int n_train_per_env = 1000;
  // Training environments mix in the other components; test ones are pure.
  double train_dominance = 0.95;
};

struct ExperimentSpec {
  Scenario scenario = Scenario::SelectionBias;
  synthetic::SelectionBiasConfig selection;
  std::vector<double> test_r_values = synthetic::default_test_r_values();
  AntiCausalSetup anti_causal;
  int n_test_per_env = 500;
  std::vector<MethodSpec> methods;
  int n_runs = 10;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0: HRM_LAB_THREADS or hardware concurrency

  void validate() const;
};

/// One (run, method) cell.
struct CellResult {
  std::vector<double> env_losses;  // every evaluated environment, in order
  std::optional<MetricsReport> metrics;  // over the test environments only
  std::string error;
  double seconds = 0.0;
  LinearModel model;                // the fitted predictor
  std::vector<double> agreement;    // per-round partition agreement (HRM only)
  std::optional<gates::GateVector> gate;
};

struct RunRecord {
  std::uint64_t run_seed = 0;
  std::vector<CellResult> cells;  // one per method, spec order
  std::map<std::string, std::vector<double>> manifest_vectors;  // theta draws etc.
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<std::string> env_names;  // column names for env_losses
  std::vector<int> test_env_indices;   // which env_losses enter the metrics
  std::vector<RunRecord> runs;

  /// Aggregated metrics for a method; nullopt when every run failed.
  [[nodiscard]] std::optional<MetricsReport> aggregated(std::size_t method) const;
  /// Per-environment losses averaged over successful runs.
  [[nodiscard]] std::vector<double> mean_env_losses(std::size_t method) const;
};

std::uint64_t run_seed(std::uint64_t master_seed, int run);

/// Training data and evaluation environments of one run.
struct RunData {
  Dataset train;
  std::vector<Dataset> test;
  std::map<std::string, std::vector<double>> manifest;  // theta draws etc.
};

RunData generate_run_data(const ExperimentSpec& spec, std::uint64_t run_seed);

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Number of worker threads honouring HRM_LAB_THREADS.
int worker_count(int requested, int jobs);

}  // namespace hrm::harness
