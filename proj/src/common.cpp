#include "hrm/common.hpp"

#include <cmath>
#include <numbers>

namespace hrm {

void Dataset::validate() const {
  if (X.rows() < 1) throw ConfigError("dataset is empty");
  if (y.size() != X.rows()) {
    throw ConfigError("dataset has " + std::to_string(X.rows()) + " rows but " +
                      std::to_string(y.size()) + " targets");
  }
  if (!X.allFinite() || !y.allFinite()) throw ConfigError("dataset contains NaN or Inf");
  if (env_labels && static_cast<Eigen::Index>(env_labels->size()) != X.rows()) {
    throw ConfigError("env_labels length does not match row count");
  }
  if (invariant_dims) {
    for (int j : *invariant_dims) {
      if (j < 0 || j >= X.cols()) throw ConfigError("invariant_dims index out of range");
    }
  }
}

Dataset select_env(const Dataset& data, int label) {
  if (!data.env_labels) throw ConfigError("dataset has no environment labels");
  const auto& labels = *data.env_labels;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) rows.push_back(static_cast<Eigen::Index>(i));
  }
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), data.X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.X.row(static_cast<Eigen::Index>(k)) = data.X.row(rows[k]);
    out.y(static_cast<Eigen::Index>(k)) = data.y(rows[k]);
  }
  out.env_labels = IndexVector(rows.size(), label);
  out.invariant_dims = data.invariant_dims;
  out.seed = data.seed;
  return out;
}

Dataset concat(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw ConfigError("concat of zero datasets");
  Eigen::Index n = 0;
  const Eigen::Index d = parts.front().X.cols();
  bool labelled = true;
  for (const auto& p : parts) {
    if (p.X.cols() != d) throw ConfigError("concat: dimension mismatch");
    n += p.X.rows();
    labelled = labelled && p.env_labels.has_value();
  }
  Dataset out;
  out.X.resize(n, d);
  out.y.resize(n);
  IndexVector labels;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.X.middleRows(at, p.X.rows()) = p.X;
    out.y.segment(at, p.y.size()) = p.y;
    if (labelled) labels.insert(labels.end(), p.env_labels->begin(), p.env_labels->end());
    at += p.X.rows();
  }
  if (labelled) out.env_labels = std::move(labels);
  out.invariant_dims = parts.front().invariant_dims;
  out.seed = parts.front().seed;
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double pearson(const Vector& a, const Vector& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  const Vector da = a.array() - ma;
  const Vector db = b.array() - mb;
  const double den = std::sqrt(da.squaredNorm() * db.squaredNorm());
  return den > 0.0 ? da.dot(db) / den : 0.0;
}

}  // namespace hrm
