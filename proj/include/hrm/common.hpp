#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hrm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = std::vector<int>;

// Error categories map onto CLI exit codes: configuration problems exit 2,
// training/generation failures exit 3.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed files; reported like configuration errors.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pooled sample: design matrix, targets and optional ground truth that
/// is only ever consulted by evaluation code.
struct Dataset {
  Matrix X;
  Vector y;
  std::optional<IndexVector> env_labels;
  std::optional<IndexVector> invariant_dims;
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index rows() const { return X.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return X.cols(); }

  /// Throws ConfigError when shapes disagree or any entry is non-finite.
  void validate() const;
};

/// Rows of `data` whose env label equals `label`. Requires env_labels.
Dataset select_env(const Dataset& data, int label);

/// Row-wise concatenation; labels are kept only if every part carries them.
Dataset concat(const std::vector<Dataset>& parts);

/// SplitMix64 step. Used to derive independent stream seeds from a master
/// seed so that (seed, stream) pairs never collide in practice.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal density.
double normal_pdf(double z);

/// Pearson correlation of two equally sized vectors (0 if either is constant).
double pearson(const Vector& a, const Vector& b);

}  // namespace hrm
