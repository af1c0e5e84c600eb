#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hrm/config.hpp"

namespace hrm::io {

using config::Json;

/// Fixed-point rendering with '.' as decimal separator regardless of locale.
std::string format_fixed(double value, int decimals);

// Datasets: columns x_0..x_{d-1}, y and, when labels are present, env.

void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

/// Sidecar describing how a dataset was produced.
Json dataset_sidecar(const Dataset& data, const Json& config,
                     const std::map<std::string, std::vector<double>>& vectors = {});

// Checkpoints. Baselines carry no gate.

struct Checkpoint {
  std::optional<gates::GateVector> gate;
  LinearModel model;
  Json config = Json::object();
  std::uint64_t seed = 0;
};

Json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const Json& j);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// row_index, hard_label, w_1..w_K.
void write_partition_csv(const std::string& path, const clustering::EnvironmentPartition& p);
Json centers_json(const std::vector<clustering::ClusterCenter>& centers, const Vector& q);

/// mask.json, partition.csv, objective_trace.csv and manifest.json.
void write_hrm_run(const std::string& dir, const driver::HrmState& state,
                   const driver::HrmConfig& config, std::uint64_t seed);

// Experiment tables. Several experiments (e.g. one per training bias) can be
// laid side by side; each block's columns are prefixed with its label.

struct TableBlock {
  std::string label;
  const harness::ExperimentResult* result = nullptr;
};

std::string results_csv(const std::vector<TableBlock>& blocks);
std::string results_markdown(const std::vector<TableBlock>& blocks);
Json experiment_manifest(const harness::ExperimentResult& result);

/// results.csv, results.md, manifest.json and one directory per run holding
/// a checkpoint and the per-environment losses of every method.
void write_experiments(const std::string& dir, const std::vector<TableBlock>& blocks);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace hrm::io
