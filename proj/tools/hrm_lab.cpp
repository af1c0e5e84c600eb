// hrm_lab: data generation, training, evaluation and table reproduction.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "hrm/io.hpp"
#include "hrm/properties.hpp"

namespace {

using namespace hrm;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  std::optional<int> runs;
  std::string data;
  std::vector<std::string> eval_data;
  std::string checkpoint;
  std::string table;
  std::string scenario = "selection-bias";
};

harness::ExperimentSpec base_spec(const Options& o, harness::Scenario fallback) {
  harness::ExperimentSpec spec;
  if (!o.config.empty()) {
    spec = config::load_experiment(o.config);
  } else {
    spec.scenario = fallback;
    spec.methods = harness::default_methods(fallback);
  }
  if (o.seed) spec.master_seed = *o.seed;
  if (o.runs) spec.n_runs = *o.runs;
  if (!o.method.empty()) {
    std::vector<harness::MethodSpec> keep;
    std::stringstream ss(o.method);
    std::string name;
    while (std::getline(ss, name, ',')) {
      auto it = std::find_if(spec.methods.begin(), spec.methods.end(),
                             [&](const auto& m) { return m.name == name; });
      if (it == spec.methods.end()) throw ConfigError("unknown method '" + name + "'");
      keep.push_back(*it);
    }
    spec.methods = keep;
  }
  spec.validate();
  return spec;
}

int cmd_generate(const Options& o) {
  const auto spec = base_spec(o, config::scenario_from_name(o.scenario));
  const std::string out = o.out.empty() ? "data" : o.out;
  fs::create_directories(out);
  const auto seed = harness::run_seed(spec.master_seed, 0);
  const auto data = harness::generate_run_data(spec, seed);
  const auto cfg = config::to_json(spec);

  io::write_dataset_csv(out + "/train.csv", data.train);
  config::write_json_file(out + "/train.json", io::dataset_sidecar(data.train, cfg, data.manifest));
  io::Json tests = io::Json::array();
  for (std::size_t e = 0; e < data.test.size(); ++e) {
    const std::string name = "test_" + std::to_string(e) + ".csv";
    io::write_dataset_csv(out + "/" + name, data.test[e]);
    tests.push_back(name);
  }
  config::write_json_file(out + "/manifest.json",
                          io::Json{{"master_seed", spec.master_seed},
                                   {"run_seed", seed},
                                   {"train", "train.csv"},
                                   {"test", tests},
                                   {"sidecar", io::dataset_sidecar(data.train, cfg, data.manifest)}});
  std::cout << "wrote " << data.train.rows() << " training rows and " << data.test.size()
            << " test environments to " << out << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const auto spec = base_spec(o, config::scenario_from_name(o.scenario));
  const std::string method = o.method.empty() ? "HRM" : o.method;
  if (spec.methods.size() != 1) throw ConfigError("train: --method selects exactly one method");
  const auto& m = spec.methods.front();
  const auto seed = o.seed.value_or(spec.master_seed);

  Dataset train;
  if (!o.data.empty()) {
    train = io::read_dataset_csv(o.data);
  } else {
    train = harness::generate_run_data(spec, harness::run_seed(seed, 0)).train;
  }
  const std::string out = o.out.empty() ? "model" : o.out;
  fs::create_directories(out);

  io::Checkpoint ck;
  ck.seed = seed;
  if (harness::is_hrm(method)) {
    const auto cfg = harness::hrm_config_for(m, seed);
    const auto state = method == "HRM" ? driver::run_hrm(train, cfg) : driver::run_hrm_single(train, cfg);
    io::write_hrm_run(out, state, cfg, seed);
    ck.gate = state.gate;
    ck.model = state.model;
    ck.config = config::to_json(cfg);
  } else {
    auto cfg = m.baseline;
    cfg.method = baselines::method_from_string(method);
    cfg.seed = seed;
    switch (cfg.method) {
      case baselines::Method::ERM: ck.model = baselines::fit_erm(train, cfg); break;
      case baselines::Method::DRO: ck.model = baselines::fit_dro(train, cfg).model; break;
      case baselines::Method::IRM:
        if (!train.env_labels) throw ConfigError("IRM needs an env column in the training data");
        ck.model = baselines::fit_irm(environments_from_labels(train, *train.env_labels), cfg);
        break;
    }
    ck.config = config::to_json(cfg);
    ck.config["method"] = baselines::to_string(cfg.method);
  }
  io::save_checkpoint(out + "/checkpoint.json", ck);
  std::cout << method << " trained on " << train.rows() << " rows; checkpoint in " << out << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("evaluate: --checkpoint is required");
  if (o.eval_data.empty()) throw ConfigError("evaluate: at least one --data file is required");
  const auto ck = io::load_checkpoint(o.checkpoint);
  const LinearModel model = ck.gate ? gates::effective_model(*ck.gate, ck.model) : ck.model;
  std::vector<double> losses;
  io::Json files = io::Json::array();
  for (const auto& path : o.eval_data) {
    const Dataset d = io::read_dataset_csv(path);
    if (d.dim() != model.theta.size()) throw ConfigError(path + ": dimension does not match model");
    losses.push_back(model.mse(d.X, d.y));
    std::cout << path << "," << io::format_fixed(losses.back(), 6) << "\n";
    files.push_back({{"path", path}, {"mse", losses.back()}});
  }
  io::Json report{{"checkpoint", o.checkpoint}, {"environments", files}};
  if (losses.size() >= 2) {
    const auto m = harness::compute_metrics(losses);
    std::cout << "mean_error," << io::format_fixed(m.mean_error, 6) << "\nstd_error,"
              << io::format_fixed(m.std_error, 6) << "\nmax_error,"
              << io::format_fixed(m.max_error, 6) << "\n";
    report["mean_error"] = m.mean_error;
    report["std_error"] = m.std_error;
    report["max_error"] = m.max_error;
  }
  if (!o.out.empty()) config::write_json_file(o.out, report);
  return 0;
}

int cmd_reproduce(const Options& o) {
  std::vector<harness::ExperimentSpec> specs;
  std::vector<std::string> labels;
  if (o.table == "sim-selection-s1") {
    const auto base = base_spec(o, harness::Scenario::SelectionBias);
    if (base.scenario != harness::Scenario::SelectionBias) {
      throw ConfigError("sim-selection-s1 needs a selection-bias config");
    }
    for (double r : {1.5, 1.9, 2.3}) {
      auto s = base;
      s.selection.r = r;
      specs.push_back(s);
      std::ostringstream label;
      label << "r=" << r;
      labels.push_back(label.str());
    }
  } else if (o.table == "anti-causal-s1") {
    const auto base = base_spec(o, harness::Scenario::AntiCausal);
    if (base.scenario != harness::Scenario::AntiCausal) {
      throw ConfigError("anti-causal-s1 needs an anti-causal config");
    }
    specs.push_back(base);
    labels.emplace_back();
  } else {
    throw ConfigError("unknown table '" + o.table + "' (expected sim-selection-s1 or anti-causal-s1)");
  }

  std::vector<harness::ExperimentResult> results;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    results.push_back(harness::run_experiment(specs[i]));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << o.table << (labels[i].empty() ? "" : " " + labels[i]) << ": "
              << specs[i].n_runs << " runs in " << io::format_fixed(secs, 1) << " s\n";
  }
  std::vector<io::TableBlock> blocks;
  for (std::size_t i = 0; i < results.size(); ++i) blocks.push_back({labels[i], &results[i]});
  const std::string out = o.out.empty() ? "results/" + o.table : o.out;
  io::write_experiments(out, blocks);
  std::cout << io::results_markdown(blocks);

  int failed = 0;
  for (const auto& r : results) {
    for (const auto& run : r.runs) {
      for (const auto& c : run.cells) failed += c.error.empty() ? 0 : 1;
    }
  }
  if (failed > 0) {
    std::cerr << failed << " cell(s) failed; see manifest.json\n";
    return kExitTraining;
  }
  return 0;
}

int cmd_selftest() {
  const auto results = properties::run_property_suite();
  int failed = 0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    failed += r.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : kExitTraining;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous risk minimization lab"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--out", o.out, "Output path");
    sub->add_option("--method", o.method, "ERM, DRO, IRM, HRM^s or HRM (comma list for reproduce)");
    sub->add_option("--runs", o.runs, "Number of runs")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("generate", "Write a training set and test environments as CSV");
  common(gen);
  gen->add_option("--scenario", o.scenario, "selection-bias or anti-causal (without --config)");

  auto* train = app.add_subcommand("train", "Fit one method and write a checkpoint");
  common(train);
  train->add_option("--data", o.data, "Training CSV (generated from the config if omitted)")
      ->check(CLI::ExistingFile);
  train->add_option("--scenario", o.scenario, "selection-bias or anti-causal (without --config)");

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on one or more CSV datasets");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->check(CLI::ExistingFile);
  eval->add_option("--data", o.eval_data, "Dataset CSV (repeatable)")->check(CLI::ExistingFile);
  eval->add_option("--out", o.out, "Write a JSON report here");

  auto* repro = app.add_subcommand("reproduce", "Rebuild a results table");
  common(repro);
  repro->add_option("table", o.table, "sim-selection-s1 or anti-causal-s1")->required();

  auto* self = app.add_subcommand("selftest", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << app.help();
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(o);
    if (train->parsed()) {
      if (o.method.find(',') != std::string::npos) throw ConfigError("train: one method only");
      if (o.method.empty()) o.method = "HRM";
      return cmd_train(o);
    }
    if (eval->parsed()) return cmd_evaluate(o);
    if (repro->parsed()) return cmd_reproduce(o);
    if (self->parsed()) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTraining;
  }
  return kExitConfig;
}
