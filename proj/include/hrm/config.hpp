#pragma once

#include <string>

#include <json.hpp>

#include "hrm/harness.hpp"

namespace hrm::config {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Each from_json starts from the defaults of the target type and overrides
// only the keys present. Unknown keys are rejected with a ConfigError that
// names the offending path.

Json to_json(const synthetic::SelectionBiasConfig& c);
Json to_json(const clustering::McConfig& c);
Json to_json(const gates::MpConfig& c);
Json to_json(const driver::HrmConfig& c);
Json to_json(const baselines::BaselineConfig& c);
Json to_json(const harness::AntiCausalSetup& c);
Json to_json(const harness::ExperimentSpec& spec);

void from_json(const Json& j, synthetic::SelectionBiasConfig& c);
void from_json(const Json& j, clustering::McConfig& c);
void from_json(const Json& j, gates::MpConfig& c);
void from_json(const Json& j, driver::HrmConfig& c);
void from_json(const Json& j, baselines::BaselineConfig& c);
void from_json(const Json& j, harness::AntiCausalSetup& c);

/// Parses a versioned experiment document. The "hrm" and "baseline"
/// sections apply to every method of that family; "methods" lists the
/// rows to run (defaults to all five).
harness::ExperimentSpec experiment_from_json(const Json& j);

std::string scenario_name(harness::Scenario s);
harness::Scenario scenario_from_name(const std::string& name);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

harness::ExperimentSpec load_experiment(const std::string& path);

}  // namespace hrm::config
