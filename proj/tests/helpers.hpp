#pragma once

#include <random>

#include "hrm/common.hpp"

namespace testing {

inline hrm::Matrix normal_matrix(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  hrm::Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = n01(rng);
  }
  return m;
}

inline hrm::Vector normal_vector(std::uint64_t seed, Eigen::Index n) {
  return normal_matrix(seed, n, 1).col(0);
}

// Ordinary least squares with intercept via the normal equations; the
// intercept is the last coefficient.
inline hrm::Vector normal_equations(const hrm::Matrix& X, const hrm::Vector& y,
                                    const hrm::Vector& w = hrm::Vector()) {
  hrm::Matrix Z(X.rows(), X.cols() + 1);
  Z << X, hrm::Vector::Ones(X.rows());
  const hrm::Vector weights = w.size() ? w : hrm::Vector::Ones(X.rows());
  const hrm::Matrix A = Z.transpose() * weights.asDiagonal() * Z;
  const hrm::Vector b = Z.transpose() * weights.asDiagonal() * y;
  return A.fullPivLu().solve(b);
}

inline double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace testing
