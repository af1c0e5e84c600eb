#include <doctest.h>

#include <algorithm>
#include <random>

#include "hrm/io.hpp"

using namespace hrm;
using namespace hrm::harness;

namespace {

ExperimentSpec tiny_spec(Scenario scenario) {
  ExperimentSpec spec;
  spec.scenario = scenario;
  spec.methods = default_methods(scenario);
  spec.n_runs = 2;
  spec.threads = 1;
  spec.selection.sum = 300;
  spec.n_test_per_env = 100;
  spec.anti_causal.n_train_per_env = 150;
  for (auto& m : spec.methods) {
    m.hrm.rounds = 2;
    m.hrm.mp.epochs = 100;
    m.hrm.mc.em_iters = 20;
    m.baseline.epochs = 200;
  }
  return spec;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("metrics by hand") {
  const auto m = compute_metrics({1, 2, 3});
  CHECK(m.mean_error == 2.0);
  CHECK(m.std_error == 1.0);
  CHECK(m.max_error == 3.0);

  const auto c = compute_metrics({0.4, 0.4, 0.4, 0.4});
  CHECK(c.std_error == 0.0);
  CHECK(c.mean_error == doctest::Approx(0.4));
  CHECK(c.max_error == 0.4);

  CHECK_THROWS_AS(compute_metrics({1.0}), ConfigError);
}

TEST_CASE("aggregation ignores run order") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<MetricsReport> runs;
  for (int r = 0; r < 10; ++r) runs.push_back(compute_metrics({u(rng), u(rng), u(rng)}));
  const auto a = aggregate_runs(runs);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(runs.begin(), runs.end(), rng);
    const auto b = aggregate_runs(runs);
    CHECK(a.mean_error == b.mean_error);
    CHECK(a.std_error == b.std_error);
    CHECK(a.max_error == b.max_error);
    CHECK(a.losses == b.losses);
  }
  double s = 0;
  for (const auto& r : runs) s += r.mean_error;
  CHECK(a.mean_error == doctest::Approx(s / 10));
}

TEST_CASE("seed derivation") {
  CHECK(run_seed(0, 0) != run_seed(0, 1));
  CHECK(run_seed(0, 3) == run_seed(0, 3));
  CHECK(method_seed(5, 0) != method_seed(5, 1));
  MethodSpec m;
  const auto cfg = hrm_config_for(m, 9);
  CHECK(cfg.mc.seed != cfg.mp.seed);
  CHECK(is_hrm("HRM^s"));
  CHECK(!is_hrm("IRM"));
  CHECK(worker_count(3, 2) == 2);
  CHECK(worker_count(1, 8) == 1);
}

TEST_CASE("selection table shape and determinism") {
  auto spec = tiny_spec(Scenario::SelectionBias);
  spec.n_runs = 1;
  const auto a = run_experiment(spec);
  const auto b = run_experiment(spec);
  CHECK(a.env_names.size() == 10);
  CHECK(a.test_env_indices.size() == 10);
  REQUIRE(a.runs.size() == 1);
  for (const auto& c : a.runs[0].cells) CHECK(c.error.empty());
  CHECK(io::results_csv({{"", &a}}) == io::results_csv({{"", &b}}));
  const auto csv = io::results_csv({{"", &a}});
  CHECK(csv.find("\nERM,") != std::string::npos);
  CHECK(csv.find("\nHRM^s,") != std::string::npos);
}

TEST_CASE("threaded runs place results deterministically") {
  auto spec = tiny_spec(Scenario::SelectionBias);
  spec.threads = 1;
  const auto serial = run_experiment(spec);
  spec.threads = 2;
  const auto parallel = run_experiment(spec);
  CHECK(io::results_csv({{"", &serial}}) == io::results_csv({{"", &parallel}}));
}

TEST_CASE("anti-causal table has ten environment columns") {
  auto spec = tiny_spec(Scenario::AntiCausal);
  spec.n_runs = 1;
  const auto r = run_experiment(spec);
  CHECK(r.env_names.size() == 10);
  CHECK(r.test_env_indices.size() == 7);
  CHECK(r.mean_env_losses(0).size() == 10);
  CHECK(r.runs[0].manifest_vectors.count("theta_phi") == 1);
  const auto agg = r.aggregated(4);
  REQUIRE(agg);
  CHECK(agg->losses.size() == 7);
}

TEST_CASE("failures are recorded per cell") {
  auto spec = tiny_spec(Scenario::SelectionBias);
  spec.n_runs = 1;
  spec.selection.max_attempts_factor = 1;
  ExperimentResult r;
  CHECK_NOTHROW(r = run_experiment(spec));
  for (const auto& c : r.runs[0].cells) CHECK(!c.error.empty());
  CHECK(!r.aggregated(0));
  CHECK(io::results_csv({{"", &r}}).find("NA") != std::string::npos);
}

TEST_CASE("specification checks") {
  auto spec = tiny_spec(Scenario::SelectionBias);
  spec.methods.clear();
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = tiny_spec(Scenario::SelectionBias);
  spec.test_r_values = {1.5};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = tiny_spec(Scenario::AntiCausal);
  spec.anti_causal.train_dominance = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

}  // TEST_SUITE
