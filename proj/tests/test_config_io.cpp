#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "hrm/io.hpp"

using namespace hrm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hrm_lab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("config_io") {

TEST_CASE("experiment configs round-trip") {
  harness::ExperimentSpec spec;
  spec.scenario = harness::Scenario::AntiCausal;
  spec.methods = harness::default_methods(spec.scenario);
  spec.n_runs = 3;
  spec.master_seed = 77;
  spec.anti_causal.train_dominance = 0.8;
  for (auto& m : spec.methods) {
    m.hrm.mp.lambda = 12.5;
    m.hrm.mc.init_strategy = clustering::InitStrategy::Random;
    m.baseline.irm_lambda = 3.0;
  }
  const auto j = config::to_json(spec);
  CHECK(j["schema_version"] == 1);
  const auto back = config::experiment_from_json(j);
  CHECK(config::to_json(back) == j);
  CHECK(back.methods.back().hrm.mp.lambda == 12.5);
  CHECK(back.methods.front().baseline.irm_lambda == 3.0);
}

TEST_CASE("partial configs keep defaults") {
  const auto j = config::Json::parse(R"({"schema_version": 1, "hrm": {"mp": {"alpha": 0.5}}})");
  const auto spec = config::experiment_from_json(j);
  CHECK(spec.scenario == harness::Scenario::SelectionBias);
  CHECK(spec.methods.size() == 5);
  CHECK(spec.methods.back().hrm.mp.alpha == 0.5);
  CHECK(spec.methods.back().hrm.mp.lambda == gates::MpConfig{}.lambda);
}

TEST_CASE("bad configs are rejected") {
  using config::Json;
  CHECK_THROWS_AS(config::experiment_from_json(Json::parse(R"({"scenario": "selection-bias"})")),
                  ConfigError);
  CHECK_THROWS_AS(config::experiment_from_json(Json::parse(R"({"schema_version": 1, "n_rnus": 3})")),
                  ConfigError);
  CHECK_THROWS_AS(
      config::experiment_from_json(Json::parse(R"({"schema_version": 1, "hrm": {"mp": {"lamda": 1}}})")),
      ConfigError);
  CHECK_THROWS_AS(config::experiment_from_json(Json::parse(R"({"schema_version": 1, "n_runs": "x"})")),
                  ConfigError);
  CHECK_THROWS_AS(config::experiment_from_json(Json::parse(R"({"schema_version": 1, "n_runs": 0})")),
                  ConfigError);
  CHECK_THROWS_AS(
      config::experiment_from_json(Json::parse(R"({"schema_version": 1, "methods": ["SVM"]})")),
      ConfigError);
  CHECK_THROWS_AS(config::experiment_from_json(Json::parse(R"({"schema_version": 1, "scenario": "x"})")),
                  ConfigError);
  CHECK_THROWS_AS(config::load_experiment("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("dataset CSV round-trips exactly") {
  const auto dir = scratch("dataset");
  Dataset d;
  d.X = testing::normal_matrix(1, 25, 4);
  d.y = testing::normal_vector(2, 25);
  d.env_labels = IndexVector(25, 1);
  (*d.env_labels)[0] = 0;
  io::write_dataset_csv((dir / "d.csv").string(), d);
  const Dataset back = io::read_dataset_csv((dir / "d.csv").string());
  CHECK(back.X == d.X);
  CHECK(back.y == d.y);
  CHECK(back.env_labels == d.env_labels);
  CHECK(slurp(dir / "d.csv").rfind("x_0,x_1,x_2,x_3,y,env\n", 0) == 0);

  d.env_labels.reset();
  io::write_dataset_csv((dir / "n.csv").string(), d);
  CHECK(!io::read_dataset_csv((dir / "n.csv").string()).env_labels);

  std::ofstream(dir / "bad.csv") << "x_0,y\n1,abc\n";
  CHECK_THROWS_AS(io::read_dataset_csv((dir / "bad.csv").string()), IoError);
  std::ofstream(dir / "hdr.csv") << "a,b\n1,2\n";
  CHECK_THROWS_AS(io::read_dataset_csv((dir / "hdr.csv").string()), IoError);
}

TEST_CASE("sidecar lists vectors and invariant dims") {
  Dataset d;
  d.X = Matrix::Ones(2, 3);
  d.y = Vector::Ones(2);
  d.invariant_dims = IndexVector{0, 1};
  d.seed = 5;
  const auto j = io::dataset_sidecar(d, config::Json{{"k", 1}}, {{"theta_psi", {0.5}}});
  CHECK(j["seed"] == 5);
  CHECK(j["invariant_dims"].size() == 2);
  CHECK(j["vectors"]["theta_psi"][0] == 0.5);
}

TEST_CASE("checkpoints round-trip") {
  const auto dir = scratch("ckpt");
  io::Checkpoint c;
  c.gate = gates::GateVector{(Vector(2) << 0.3, 1.2).finished(), 0.1};
  c.model = LinearModel{(Vector(2) << 1.0 / 3.0, -2.0).finished(), 0.25};
  c.seed = 99;
  c.config = config::to_json(gates::MpConfig{});
  io::save_checkpoint((dir / "c.json").string(), c);
  const auto back = io::load_checkpoint((dir / "c.json").string());
  REQUIRE(back.gate);
  CHECK(back.gate->mu == c.gate->mu);
  CHECK(back.model.theta == c.model.theta);
  CHECK(back.model.intercept == 0.25);
  CHECK(back.seed == 99);
  CHECK(back.config == c.config);

  c.gate.reset();
  const auto j = io::checkpoint_to_json(c);
  CHECK(!j.contains("mu"));
  CHECK(!j.contains("sigma_gate"));
  CHECK(!io::checkpoint_from_json(j).gate);
  CHECK_THROWS_AS(io::checkpoint_from_json(config::Json{{"theta", {1.0}}}), IoError);
}

TEST_CASE("partition and HRM run artifacts") {
  const auto dir = scratch("run");
  synthetic::SelectionBiasConfig sc;
  sc.sum = 300;
  const Dataset d = synthetic::generate_selection_bias(sc, 3);
  driver::HrmConfig cfg;
  cfg.rounds = 2;
  cfg.mp.epochs = 100;
  const auto state = driver::run_hrm(d, cfg);
  io::write_hrm_run(dir.string(), state, cfg, 3);
  for (const char* f : {"mask.json", "partition.csv", "objective_trace.csv", "manifest.json"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto part = slurp(dir / "partition.csv");
  CHECK(part.rfind("row_index,hard_label,w_1,w_2\n", 0) == 0);
  CHECK(std::count(part.begin(), part.end(), '\n') == 301);
  const auto trace = slurp(dir / "objective_trace.csv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + static_cast<long>(state.history.size()));
  const auto centers = io::centers_json({{LinearModel{Vector::Ones(2), 0.5}, 0.7}}, Vector::Ones(1));
  CHECK(centers[0]["sigma_y"] == 0.7);
}

TEST_CASE("fixed decimals") {
  CHECK(io::format_fixed(0.4494, 3) == "0.449");
  CHECK(io::format_fixed(-0.0001, 3) == "0.000");
  CHECK(io::format_fixed(2.0, 6) == "2.000000");
}

TEST_CASE("experiment outputs") {
  const auto dir = scratch("exp");
  harness::ExperimentSpec spec;
  spec.methods = harness::default_methods(spec.scenario);
  spec.n_runs = 1;
  spec.selection.sum = 300;
  spec.n_test_per_env = 100;
  for (auto& m : spec.methods) {
    m.hrm.rounds = 2;
    m.hrm.mp.epochs = 100;
    m.baseline.epochs = 100;
  }
  const auto r = harness::run_experiment(spec);
  io::write_experiments(dir.string(), {{"r=1.9", &r}});
  CHECK(fs::exists(dir / "results.csv"));
  CHECK(fs::exists(dir / "results.md"));
  CHECK(fs::exists(dir / "r=1.9" / "run_00" / "HRM.json"));
  CHECK(fs::exists(dir / "r=1.9" / "run_00" / "HRM_s.json"));
  const auto hrm = io::load_checkpoint((dir / "r=1.9" / "run_00" / "HRM.json").string());
  CHECK(hrm.gate);
  const auto erm = io::load_checkpoint((dir / "r=1.9" / "run_00" / "ERM.json").string());
  CHECK(!erm.gate);

  // Every table number traces to a recorded seed and config.
  const auto m = config::read_json_file((dir / "manifest.json").string());
  const auto& e = m["experiments"][0];
  CHECK(e["config"]["schema_version"] == 1);
  CHECK(e["runs"][0]["run_seed"] == harness::run_seed(0, 0));
  for (const auto& cell : e["runs"][0]["cells"]) CHECK(cell.contains("method_seed"));
  const auto csv = slurp(dir / "results.csv");
  CHECK(csv.rfind("method,r=1.9:mean_error,r=1.9:std_error,r=1.9:max_error\n", 0) == 0);
}

}  // TEST_SUITE
