#include "hrm/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hrm::io {

namespace fs = std::filesystem;

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Text that parses back to the same double.
std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": not a number '" + s + "'");
  }
}

std::string cell(const std::optional<double>& v, int decimals) {
  return v && std::isfinite(*v) ? format_fixed(*v, decimals) : "NA";
}

std::string safe_name(const std::string& name) {
  std::string out;
  for (char c : name) out += c == '^' ? '_' : c;
  return out;
}

}  // namespace

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  data.validate();
  std::ostringstream os;
  for (Eigen::Index j = 0; j < data.dim(); ++j) os << "x_" << j << ',';
  os << 'y';
  if (data.env_labels) os << ",env";
  os << '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) os << exact(data.X(i, j)) << ',';
    os << exact(data.y(i));
    if (data.env_labels) os << ',' << (*data.env_labels)[static_cast<std::size_t>(i)];
    os << '\n';
  }
  write_text_file(path, os.str());
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  const auto header = split(line, ',');
  int d = 0;
  while (d < static_cast<int>(header.size()) && header[d] == "x_" + std::to_string(d)) ++d;
  const bool has_env = header.size() == static_cast<std::size_t>(d + 2) && header.back() == "env";
  if (d == 0 || header.size() < static_cast<std::size_t>(d + 1) || header[d] != "y" ||
      header.size() != static_cast<std::size_t>(d + 1 + (has_env ? 1 : 0))) {
    throw IoError(path + ": expected header x_0..x_{d-1},y[,env]");
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  IndexVector labels;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": wrong number of columns");
    }
    const std::string where = path + ":" + std::to_string(lineno);
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] = parse_double(cells[j], where);
    rows.push_back(std::move(x));
    ys.push_back(parse_double(cells[d], where));
    if (has_env) labels.push_back(static_cast<int>(parse_double(cells[d + 1], where)));
  }
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) out.X(static_cast<Eigen::Index>(i), j) = rows[i][j];
  }
  out.y = to_eigen(ys);
  if (has_env) out.env_labels = labels;
  try {
    out.validate();
  } catch (const ConfigError& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

Json dataset_sidecar(const Dataset& data, const Json& config,
                     const std::map<std::string, std::vector<double>>& vectors) {
  Json j;
  j["rows"] = data.rows();
  j["dim"] = data.dim();
  j["seed"] = data.seed;
  j["config"] = config;
  Json v = Json::object();
  for (const auto& [name, values] : vectors) v[name] = values;
  j["vectors"] = v;
  j["invariant_dims"] = data.invariant_dims ? Json(*data.invariant_dims) : Json(nullptr);
  return j;
}

Json checkpoint_to_json(const Checkpoint& c) {
  Json j;
  if (c.gate) {
    j["mu"] = to_std(c.gate->mu);
    j["sigma_gate"] = c.gate->sigma_gate;
  }
  j["theta"] = to_std(c.model.theta);
  j["intercept"] = c.model.intercept;
  j["config"] = c.config;
  j["seed"] = c.seed;
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  Checkpoint c;
  try {
    c.model.theta = to_eigen(j.at("theta").get<std::vector<double>>());
    c.model.intercept = j.at("intercept").get<double>();
    if (j.contains("mu")) {
      gates::GateVector g;
      g.mu = to_eigen(j.at("mu").get<std::vector<double>>());
      g.sigma_gate = j.at("sigma_gate").get<double>();
      if (g.mu.size() != c.model.theta.size()) throw IoError("checkpoint: mu/theta size mismatch");
      c.gate = g;
    }
    if (j.contains("config")) c.config = j.at("config");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  config::write_json_file(path, checkpoint_to_json(c));
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return checkpoint_from_json(config::read_json_file(path));
  } catch (const ConfigError& e) {
    throw IoError(e.what());
  }
}

void write_partition_csv(const std::string& path, const clustering::EnvironmentPartition& p) {
  std::ostringstream os;
  os << "row_index,hard_label";
  for (Eigen::Index k = 0; k < p.W.cols(); ++k) os << ",w_" << (k + 1);
  os << '\n';
  for (Eigen::Index i = 0; i < p.W.rows(); ++i) {
    os << i << ',' << p.hard_labels.at(static_cast<std::size_t>(i));
    for (Eigen::Index k = 0; k < p.W.cols(); ++k) os << ',' << exact(p.W(i, k));
    os << '\n';
  }
  write_text_file(path, os.str());
}

Json centers_json(const std::vector<clustering::ClusterCenter>& centers, const Vector& q) {
  Json arr = Json::array();
  for (std::size_t k = 0; k < centers.size(); ++k) {
    arr.push_back({{"theta", to_std(centers[k].model.theta)},
                   {"intercept", centers[k].model.intercept},
                   {"sigma_y", centers[k].sigma_y},
                   {"q", k < static_cast<std::size_t>(q.size()) ? q(static_cast<Eigen::Index>(k)) : 0.0}});
  }
  return arr;
}

void write_hrm_run(const std::string& dir, const driver::HrmState& state,
                   const driver::HrmConfig& config, std::uint64_t seed) {
  fs::create_directories(dir);
  Json rounds = Json::array();
  for (const auto& rec : state.history) rounds.push_back(to_std(rec.mask));
  config::write_json_file(dir + "/mask.json",
                          Json{{"mask", to_std(gates::hard_mask(state.gate))},
                               {"mu", to_std(state.gate.mu)},
                               {"rounds", rounds}});
  write_partition_csv(dir + "/partition.csv", state.partition);

  std::ostringstream os;
  os << "round,mp_objective,mc_objective,agreement\n";
  for (std::size_t r = 0; r < state.history.size(); ++r) {
    const auto& rec = state.history[r];
    os << r << ',' << exact(rec.mp_objective) << ',' << exact(rec.mc_objective) << ','
       << (rec.agreement ? exact(*rec.agreement) : "NA") << '\n';
  }
  write_text_file(dir + "/objective_trace.csv", os.str());

  Checkpoint ck{state.gate, state.model, config::to_json(config), seed};
  config::write_json_file(dir + "/manifest.json",
                          Json{{"seed", seed},
                               {"rounds_completed", state.round},
                               {"config", config::to_json(config)},
                               {"checkpoint", checkpoint_to_json(ck)}});
}

std::string results_csv(const std::vector<TableBlock>& blocks) {
  if (blocks.empty()) throw ConfigError("results: no experiments");
  const auto& first = *blocks.front().result;
  std::ostringstream os;
  os << "method";
  for (const auto& b : blocks) {
    const std::string p = b.label.empty() ? "" : b.label + ":";
    if (b.result->spec.scenario == harness::Scenario::AntiCausal) {
      for (const auto& e : b.result->env_names) os << ',' << p << e;
    }
    os << ',' << p << "mean_error," << p << "std_error," << p << "max_error";
  }
  os << '\n';
  for (std::size_t m = 0; m < first.spec.methods.size(); ++m) {
    os << first.spec.methods[m].name;
    for (const auto& b : blocks) {
      if (b.result->spec.scenario == harness::Scenario::AntiCausal) {
        for (double v : b.result->mean_env_losses(m)) os << ',' << cell(v, 6);
      }
      const auto agg = b.result->aggregated(m);
      os << ',' << cell(agg ? std::optional(agg->mean_error) : std::nullopt, 6) << ','
         << cell(agg ? std::optional(agg->std_error) : std::nullopt, 6) << ','
         << cell(agg ? std::optional(agg->max_error) : std::nullopt, 6);
    }
    os << '\n';
  }
  return os.str();
}

std::string results_markdown(const std::vector<TableBlock>& blocks) {
  if (blocks.empty()) throw ConfigError("results: no experiments");
  const auto& first = *blocks.front().result;
  std::ostringstream os;
  std::vector<std::string> head{"Method"};
  for (const auto& b : blocks) {
    const std::string p = b.label.empty() ? "" : b.label + " ";
    if (b.result->spec.scenario == harness::Scenario::AntiCausal) {
      for (const auto& e : b.result->env_names) head.push_back(p + e);
    }
    for (const char* s : {"Mean", "Std", "Max"}) head.push_back(p + s);
  }
  os << '|';
  for (const auto& h : head) os << ' ' << h << " |";
  os << "\n|";
  for (std::size_t i = 0; i < head.size(); ++i) os << "---|";
  os << '\n';
  for (std::size_t m = 0; m < first.spec.methods.size(); ++m) {
    os << "| " << first.spec.methods[m].name << " |";
    for (const auto& b : blocks) {
      if (b.result->spec.scenario == harness::Scenario::AntiCausal) {
        for (double v : b.result->mean_env_losses(m)) os << ' ' << cell(v, 3) << " |";
      }
      const auto agg = b.result->aggregated(m);
      for (auto v : {agg ? std::optional(agg->mean_error) : std::nullopt,
                     agg ? std::optional(agg->std_error) : std::nullopt,
                     agg ? std::optional(agg->max_error) : std::nullopt}) {
        os << ' ' << cell(v, 3) << " |";
      }
    }
    os << '\n';
  }
  return os.str();
}

Json experiment_manifest(const harness::ExperimentResult& result) {
  const auto& spec = result.spec;
  Json j;
  j["config"] = config::to_json(spec);
  j["env_names"] = result.env_names;
  j["test_env_indices"] = result.test_env_indices;
  Json runs = Json::array();
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    const auto& run = result.runs[r];
    Json jr;
    jr["run"] = r;
    jr["run_seed"] = run.run_seed;
    Json vectors = Json::object();
    for (const auto& [name, values] : run.manifest_vectors) vectors[name] = values;
    jr["vectors"] = vectors;
    Json cells = Json::array();
    for (std::size_t m = 0; m < run.cells.size(); ++m) {
      const auto& c = run.cells[m];
      const auto ms = harness::method_seed(run.run_seed, m);
      Json jc;
      jc["method"] = spec.methods[m].name;
      jc["method_seed"] = ms;
      if (harness::is_hrm(spec.methods[m].name)) {
        const auto cfg = harness::hrm_config_for(spec.methods[m], ms);
        jc["mc_seed"] = cfg.mc.seed;
        jc["mp_seed"] = cfg.mp.seed;
        jc["agreement"] = c.agreement;
      }
      jc["env_losses"] = c.env_losses;
      if (c.metrics) {
        jc["metrics"] = {{"mean_error", c.metrics->mean_error},
                         {"std_error", c.metrics->std_error},
                         {"max_error", c.metrics->max_error}};
      }
      jc["seconds"] = c.seconds;
      if (!c.error.empty()) jc["error"] = c.error;
      cells.push_back(jc);
    }
    jr["cells"] = cells;
    runs.push_back(jr);
  }
  j["runs"] = runs;
  return j;
}

void write_experiments(const std::string& dir, const std::vector<TableBlock>& blocks) {
  fs::create_directories(dir);
  write_text_file(dir + "/results.csv", results_csv(blocks));
  write_text_file(dir + "/results.md", results_markdown(blocks));

  Json manifest;
  manifest["schema_version"] = config::kSchemaVersion;
  Json exps = Json::array();
  for (const auto& b : blocks) {
    Json e = experiment_manifest(*b.result);
    e["label"] = b.label;
    exps.push_back(e);
  }
  manifest["experiments"] = exps;
  config::write_json_file(dir + "/manifest.json", manifest);

  for (const auto& b : blocks) {
    const auto& res = *b.result;
    for (std::size_t r = 0; r < res.runs.size(); ++r) {
      const auto& run = res.runs[r];
      char name[32];
      std::snprintf(name, sizeof name, "run_%02zu", r);
      const std::string base =
          dir + "/" + (b.label.empty() ? "" : safe_name(b.label) + "/") + name;
      fs::create_directories(base);
      for (std::size_t m = 0; m < run.cells.size(); ++m) {
        const auto& c = run.cells[m];
        const auto& method = res.spec.methods[m];
        if (!c.error.empty()) continue;
        const auto ms = harness::method_seed(run.run_seed, m);
        Checkpoint ck;
        ck.gate = c.gate;
        ck.model = c.model;
        ck.seed = ms;
        if (harness::is_hrm(method.name)) {
          ck.config = config::to_json(harness::hrm_config_for(method, ms));
        } else {
          auto bc = method.baseline;
          bc.method = baselines::method_from_string(method.name);
          bc.seed = ms;
          ck.config = config::to_json(bc);
          ck.config["method"] = baselines::to_string(bc.method);
        }
        save_checkpoint(base + "/" + safe_name(method.name) + ".json", ck);
      }
    }
  }
}

}  // namespace hrm::io
