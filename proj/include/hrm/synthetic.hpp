#pragma once

#include <cstdint>
#include <vector>

#include "hrm/common.hpp"

namespace hrm::synthetic {

/// Selection-bias mechanism. X = [Phi*, Psi*], the first `n_b` columns of
/// Psi* form the biased set V_b. Samples are accepted with probability
/// prod_i |r|^(-5 |f(phi) - sign(r) v_i|).
struct SelectionBiasConfig {
  int d = 10;
  int n_phi = 5;
  int n_b = 1;
  double r = 1.9;
  double beta = 1.0;
  int sum = 2000;
  double kappa = 0.95;
  double r_minor = -1.1;
  double noise_std = 0.5477225575051661;  // sqrt(0.3)
  // Rejection attempts allowed per requested sample.
  int max_attempts_factor = 1000;

  [[nodiscard]] int n_psi() const { return d - n_phi; }
  /// Throws ConfigError on any violated constraint.
  void validate() const;
};

/// Anti-causal mechanism: Phi* ~ sum_i z_i N(mu_i, I),
/// Y = theta_phi' Phi* + beta Phi1 Phi2 Phi3 + N(0, noise_std^2),
/// Psi* = theta_psi Y + N(0, sigma_i^2) with i the component that drew Phi*.
struct AntiCausalConfig {
  int n_phi = 9;
  int n_psi = 1;
  std::vector<Vector> means;   // one per component, length n_phi
  std::vector<double> sigmas;  // one per component, > 0
  double beta = 0.1;
  double noise_std = 0.5477225575051661;  // sqrt(0.3)
  Vector theta_phi;
  Vector theta_psi;

  [[nodiscard]] int components() const { return static_cast<int>(means.size()); }
  void validate() const;
};

/// theta_phi = [1/2, -1, 1, -1/2, 1, -1, ...] repeated cyclically.
Vector default_theta_phi(int n_phi);

double invariant_response(const Vector& phi, const Vector& theta_phi, double beta, double noise);

double selection_probability(double y_clean, const Vector& v_b, double r);

/// Draws `n` accepted samples for a single environment with bias `r`.
/// Throws GenerationError when the attempt budget is exhausted.
Dataset generate_selection_env(const SelectionBiasConfig& config, double r, int n,
                               std::uint64_t seed);

/// Pooled training set: round(kappa*sum) rows from r (label 0) followed by
/// the remainder from r_minor (label 1).
Dataset generate_selection_bias(const SelectionBiasConfig& config, std::uint64_t seed);

/// Samples from the generative model before any selection is applied.
Dataset sample_unselected(const SelectionBiasConfig& config, int n, std::uint64_t seed);

/// One dataset per r value, labelled with its grid index.
std::vector<Dataset> generate_test_grid(const SelectionBiasConfig& config,
                                        const std::vector<double>& r_values, int n_per_env,
                                        std::uint64_t seed);

/// r grid of the selection-bias test environments.
std::vector<double> default_test_r_values();

/// Ten-component configuration with the published means and noise scales.
/// theta_phi ~ N(1, I) and theta_psi ~ N(0.5, 0.1 I) are drawn from `seed`.
AntiCausalConfig default_anti_causal_config(int n_phi, int n_psi, std::uint64_t seed);

struct EnvSpec {
  Vector weights;  // mixture weights over the config's components
  int n = 0;
};

/// One-hot mixture weights: environment i draws only from component i.
std::vector<EnvSpec> one_hot_env_specs(const AntiCausalConfig& config, int n_per_env);

/// Environment i draws from component i with probability `dominance` and
/// otherwise from a uniformly chosen component (which may again be i).
std::vector<EnvSpec> dominant_env_specs(const AntiCausalConfig& config, int n_per_env,
                                        double dominance);

/// One dataset per environment, labelled with the environment index.
std::vector<Dataset> generate_anti_causal(const AntiCausalConfig& config,
                                          const std::vector<EnvSpec>& envs,
                                          std::uint64_t seed);

/// Per-row noise scale applied to Psi*; returned alongside for testing.
struct AntiCausalSample {
  Dataset data;
  std::vector<int> component;
};

AntiCausalSample sample_anti_causal_env(const AntiCausalConfig& config, const EnvSpec& env,
                                        std::uint64_t seed);

}  // namespace hrm::synthetic
