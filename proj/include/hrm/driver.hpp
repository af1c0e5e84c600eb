#pragma once

#include <optional>
#include <vector>

#include "hrm/clustering.hpp"
#include "hrm/gates.hpp"

namespace hrm::driver {

enum class ConvertMode { Soft, HardThreshold };

struct HrmConfig {
  int rounds = 10;
  clustering::McConfig mc;
  gates::MpConfig mp;
  ConvertMode convert = ConvertMode::Soft;
  double tau = 0.5;
  double stop_tol = 0.01;
  bool warm_start = true;
  // Pass sampled hard environments to the learner instead of soft weights.
  bool stochastic_assignment = false;

  void validate() const;
};

struct RoundRecord {
  Vector mask;
  double mp_objective = 0.0;
  double mc_objective = 0.0;
  // Agreement with ground-truth labels, when the dataset carries them.
  std::optional<double> agreement;
  IndexVector hard_labels;
};

struct HrmState {
  int round = 0;  // completed rounds
  gates::GateVector gate;
  LinearModel model;
  clustering::EnvironmentPartition partition;
  std::vector<RoundRecord> history;

  /// theta masked by the deterministic gate.
  [[nodiscard]] LinearModel predictor() const;
};

/// Variant-feature weights (1 - M), or the thresholded variant.
Vector convert_selector(const Vector& mask, const HrmConfig& config);

HrmState run_hrm(const Dataset& data, const HrmConfig& config);

/// One clustering pass followed by one invariant fit.
HrmState run_hrm_single(const Dataset& data, HrmConfig config);

/// Best hard-label accuracy over relabelings of the predicted clusters.
double partition_agreement(const IndexVector& predicted, const IndexVector& truth);

}  // namespace hrm::driver
