#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hrm/common.hpp"
#include "hrm/gates.hpp"

namespace hrm::baselines {

enum class Method { ERM, IRM, DRO };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct BaselineConfig {
  Method method = Method::ERM;
  double learning_rate = 0.05;
  int epochs = 3000;
  double irm_lambda = 100.0;
  double dro_gamma = 2.0;
  int dro_inner_steps = 15;
  double dro_inner_lr = 0.0005;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Pooled least squares by gradient descent with backtracking.
LinearModel fit_erm(const Dataset& data, const BaselineConfig& config);

/// d/dw of the environment risk of w * (theta'x + b), evaluated at w = 1.
double irm_dummy_derivative(const Environment& env, const LinearModel& model);

/// sum_e (d/dw L^e)^2 at w = 1.
double irm_penalty(const std::vector<Environment>& envs, const LinearModel& model);

/// sum_e L^e + irm_lambda * irm_penalty, minimised from the ERM solution.
LinearModel fit_irm(const std::vector<Environment>& envs, const BaselineConfig& config);

/// Inner ascent on (theta'(x+delta) + b - y)^2 - gamma |delta|^2 from delta = 0.
Vector dro_inner_max(const LinearModel& model, const Vector& x, double y, double gamma,
                     int steps, double step_size);

struct DroResult {
  LinearModel model;
  std::vector<double> robust_loss;  // mean perturbed loss per epoch
};

DroResult fit_dro(const Dataset& data, const BaselineConfig& config);

}  // namespace hrm::baselines
