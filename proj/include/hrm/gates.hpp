#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hrm/common.hpp"

namespace hrm {

struct LinearModel {
  Vector theta;
  double intercept = 0.0;

  [[nodiscard]] Vector predict(const Matrix& X) const;
  [[nodiscard]] double mse(const Matrix& X, const Vector& y) const;
};

/// A training environment. Rows may be shared between environments when
/// a soft partition is in use; `weight` then holds the responsibilities.
/// An empty weight vector means every row counts once.
struct Environment {
  Matrix X;
  Vector y;
  Vector weight;

  [[nodiscard]] double total_weight() const;
};

/// Builds one hard environment per distinct label.
std::vector<Environment> environments_from_labels(const Dataset& data, const IndexVector& labels);

/// Builds K weighted environments over all rows from an n x K
/// responsibility matrix.
std::vector<Environment> environments_from_weights(const Dataset& data, const Matrix& W);

/// Weighted second moments over the augmented row z = [x, 1].
struct EnvMoments {
  Matrix zz;  // (d+1) x (d+1)
  Vector zy;  // d+1
  double yy = 0.0;

  static EnvMoments of(const Environment& env);
};

}  // namespace hrm

namespace hrm::gates {

struct GateVector {
  Vector mu;
  double sigma_gate = 0.1;
};

enum class Optimizer { GradientDescent, Adam };

struct MpConfig {
  double lambda = 50.0;
  double alpha = 0.01;
  double sigma_gate = 0.1;
  double learning_rate = 0.01;
  // Multiplicative per-epoch learning-rate decay; 1 disables it.
  double lr_decay = 1.0;
  int epochs = 3000;
  int mc_samples = 4;
  // Epochs over which the variance-penalty weight ramps linearly to lambda.
  int penalty_warmup = 0;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;

  void validate() const;
};

/// clip(mu + noise, 0, 1) elementwise.
Vector gate_mask(const GateVector& gate, const Vector& noise);

/// The noise-free gate, clip(mu, 0, 1).
Vector hard_mask(const GateVector& gate);

/// Expected number of open gates, sum_i Phi(mu_i / sigma).
double expected_l0(const GateVector& gate);

/// Monte-Carlo estimate of E_M[ MSE(theta; M*X) ] + alpha * expected_l0.
/// With mc_samples == 0 the deterministic mask is used instead.
double env_risk(const Environment& env, const GateVector& gate, const LinearModel& model,
                double alpha, int mc_samples, std::uint64_t seed);

/// Per-environment gradient of the weighted MSE w.r.t. theta under the
/// deterministic mask.
std::vector<Vector> env_gradients(const std::vector<Environment>& envs, const GateVector& gate,
                                  const LinearModel& model);

/// || Var_e(grad_theta L^e) * M ||^2 with the unbiased (K-1) estimator.
double variance_penalty(const std::vector<Environment>& envs, const GateVector& gate,
                        const LinearModel& model);

struct ObjectiveValue {
  double value = 0.0;
  double risk = 0.0;
  double l0 = 0.0;
  double penalty = 0.0;
  Vector grad_theta;
  double grad_intercept = 0.0;
  Vector grad_mu;
};

/// Full objective and its gradient. `noise` holds one gate-noise vector per
/// Monte-Carlo sample for the risk term; an empty list means the
/// deterministic mask. The penalty always uses the deterministic mask.
ObjectiveValue objective(const std::vector<EnvMoments>& envs, const GateVector& gate,
                         const LinearModel& model, double lambda, double alpha,
                         const std::vector<Vector>& noise);

struct MpResult {
  GateVector gate;
  LinearModel model;
  std::vector<double> trace;  // deterministic objective after each epoch
};

/// Full-batch gradient descent on the gated objective.
MpResult fit_mp(const std::vector<Environment>& envs, const MpConfig& config,
                const std::optional<std::pair<GateVector, LinearModel>>& warm_start = std::nullopt);

/// theta * hard_mask, i.e. the predictor actually used at evaluation time.
LinearModel effective_model(const GateVector& gate, const LinearModel& model);

}  // namespace hrm::gates
