#pragma once

#include <cstdint>
#include <vector>

#include "hrm/common.hpp"
#include "hrm/gates.hpp"

namespace hrm::clustering {

/// Gaussian regression centre N(f(psi), sigma_y^2) over the variant features.
struct ClusterCenter {
  LinearModel model;
  double sigma_y = 0.5;
};

struct EnvironmentPartition {
  Matrix W;  // n x K responsibilities
  Vector q;  // mixture weights
  IndexVector hard_labels;

  [[nodiscard]] int clusters() const { return static_cast<int>(q.size()); }
};

// KMeansPlusPlus: D^2 seeding on the joint (psi, y) rows. RegressionPlusPlus:
// seed lines fitted on small row subsets, later subsets drawn in proportion
// to the squared residual under the lines chosen so far. Random: uniform rows.
enum class InitStrategy { KMeansPlusPlus, RegressionPlusPlus, Random };

struct McConfig {
  int K = 2;
  double sigma_y = 0.7;
  int em_iters = 100;
  // Centres are refit in closed form, so one step already solves the M-step.
  int inner_fit_iters = 1;
  InitStrategy init_strategy = InitStrategy::KMeansPlusPlus;
  // Independent initialisations; the run with the lowest final objective wins.
  int restarts = 1;
  std::uint64_t seed = 0;
  double min_responsibility = 1e-3;
  double tol = 1e-6;

  void validate() const;
};

double center_likelihood(const ClusterCenter& center, const Vector& psi, double y);

/// -(1/N) sum_i log( sum_j q_j h_j(psi_i, y_i) ), densities floored at 1e-300.
double clustering_objective(const Matrix& psi, const Vector& y,
                            const std::vector<ClusterCenter>& centers, const Vector& q);

struct EStepResult {
  Matrix W;
  int underflow_rows = 0;  // rows that fell back to a uniform assignment
};

EStepResult e_step(const Matrix& psi, const Vector& y, const std::vector<ClusterCenter>& centers,
                   const Vector& q);

/// Weighted least squares of y on [psi, 1]; minimum-norm on rank deficiency.
LinearModel weighted_least_squares(const Matrix& psi, const Vector& y, const Vector& w);

struct MStepResult {
  std::vector<ClusterCenter> centers;
  Vector q;
  std::vector<int> reseeded;  // clusters rescued from the worst-fit points
};

MStepResult m_step(const Matrix& psi, const Vector& y, const Matrix& W, double sigma_y,
                   double min_responsibility);

struct McResult {
  EnvironmentPartition partition;
  std::vector<ClusterCenter> centers;
  std::vector<double> trace;  // objective at initialisation and after every EM step
  int underflow_rows = 0;
};

/// Argmax of each row, lowest index on ties.
IndexVector hard_labels(const Matrix& W);

/// Draws one label per row from the categorical distribution in that row.
IndexVector sample_labels(const Matrix& W, std::uint64_t seed);

/// psi = selector * x row-wise. Throws ConfigError when the selector has no
/// positive entry.
Matrix apply_selector(const Matrix& X, const Vector& selector);

McResult fit_mc(const Matrix& X, const Vector& y, const Vector& psi_selector,
                const McConfig& config);

/// EM from explicit starting centres and weights.
McResult fit_mc_from(const Matrix& psi, const Vector& y, std::vector<ClusterCenter> centers,
                     Vector q, const McConfig& config);

struct BicPoint {
  int K = 0;
  double objective = 0.0;
  double bic = 0.0;
};

/// Advisory BIC sweep over cluster counts; does not change any default.
std::vector<BicPoint> bic_sweep(const Matrix& X, const Vector& y, const Vector& psi_selector,
                                const McConfig& config, const std::vector<int>& ks);

}  // namespace hrm::clustering
