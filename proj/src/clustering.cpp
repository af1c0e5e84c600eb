#include "hrm/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <numeric>

namespace hrm::clustering {
namespace {

constexpr double kDensityFloor = 1e-300;

std::vector<Vector> all_predictions(const Matrix& psi, const std::vector<ClusterCenter>& centers) {
  std::vector<Vector> out;
  out.reserve(centers.size());
  for (const auto& c : centers) out.push_back(c.model.predict(psi));
  return out;
}

double density(double residual, double sigma) {
  const double z = residual / sigma;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

// One-hot responsibilities from the smallest absolute residual.
Matrix nearest_line(const Matrix& psi, const Vector& y, const std::vector<LinearModel>& lines) {
  Matrix W = Matrix::Zero(psi.rows(), static_cast<Eigen::Index>(lines.size()));
  Matrix r(psi.rows(), W.cols());
  for (std::size_t j = 0; j < lines.size(); ++j) {
    r.col(static_cast<Eigen::Index>(j)) = (y - lines[j].predict(psi)).cwiseAbs();
  }
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    Eigen::Index best = 0;
    r.row(i).minCoeff(&best);
    W(i, best) = 1.0;
  }
  return W;
}

Matrix seed_regressions(const Matrix& psi, const Vector& y, int k, Rng& rng) {
  const Eigen::Index n = psi.rows();
  const Eigen::Index m = std::min<Eigen::Index>(n, psi.cols() + 2);
  Vector score = Vector::Ones(n);
  std::vector<LinearModel> lines;
  while (static_cast<int>(lines.size()) < k) {
    // Draw m distinct rows with probability proportional to `score`.
    Vector w = Vector::Zero(n);
    Vector p = score;
    for (Eigen::Index t = 0; t < m && p.sum() > 0.0; ++t) {
      std::discrete_distribution<Eigen::Index> pick(p.data(), p.data() + n);
      const Eigen::Index i = pick(rng);
      w(i) = 1.0;
      p(i) = 0.0;
    }
    lines.push_back(weighted_least_squares(psi, y, w));
    const Vector r2 = (y - lines.back().predict(psi)).array().square();
    score = lines.size() == 1 ? r2 : score.cwiseMin(r2);
    if (!(score.sum() > 0.0)) score.setOnes();
  }
  return nearest_line(psi, y, lines);
}

// K seeds by D^2 sampling on the joint (psi, y) rows, then nearest-seed
// one-hot responsibilities.
Matrix seed_responsibilities(const Matrix& psi, const Vector& y, int k, InitStrategy strategy,
                             Rng& rng) {
  if (strategy == InitStrategy::RegressionPlusPlus) return seed_regressions(psi, y, k, rng);
  const Eigen::Index n = psi.rows();
  Matrix joint(n, psi.cols() + 1);
  joint.leftCols(psi.cols()) = psi;
  joint.col(psi.cols()) = y;

  std::vector<Eigen::Index> seeds;
  std::uniform_int_distribution<Eigen::Index> any_row(0, n - 1);
  seeds.push_back(any_row(rng));
  Vector dist2 = (joint.rowwise() - joint.row(seeds[0])).rowwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < k) {
    Eigen::Index next = any_row(rng);
    if (strategy == InitStrategy::KMeansPlusPlus && dist2.sum() > 0.0) {
      std::discrete_distribution<Eigen::Index> pick(dist2.data(), dist2.data() + n);
      next = pick(rng);
    }
    seeds.push_back(next);
    dist2 = dist2.cwiseMin((joint.rowwise() - joint.row(next)).rowwise().squaredNorm());
  }

  Matrix W = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double dj = (joint.row(i) - joint.row(seeds[static_cast<std::size_t>(j)])).squaredNorm();
      if (dj < best_d) {
        best_d = dj;
        best = j;
      }
    }
    W(i, best) = 1.0;
  }
  return W;
}


}  // namespace

void McConfig::validate() const {
  if (K < 1) throw ConfigError("mc: K must be >= 1");
  if (!(sigma_y > 0.0)) throw ConfigError("mc: sigma_y must be > 0");
  if (em_iters < 0) throw ConfigError("mc: em_iters must be >= 0");
  if (inner_fit_iters < 1) throw ConfigError("mc: inner_fit_iters must be >= 1");
  if (restarts < 1) throw ConfigError("mc: restarts must be >= 1");
  if (!(min_responsibility >= 0.0 && min_responsibility < 1.0)) {
    throw ConfigError("mc: min_responsibility must be in [0,1)");
  }
  if (!(tol >= 0.0)) throw ConfigError("mc: tol must be >= 0");
}

double center_likelihood(const ClusterCenter& center, const Vector& psi, double y) {
  const double f = center.model.theta.dot(psi) + center.model.intercept;
  return density(y - f, center.sigma_y);
}

double clustering_objective(const Matrix& psi, const Vector& y,
                            const std::vector<ClusterCenter>& centers, const Vector& q) {
  const auto preds = all_predictions(psi, centers);
  double total = 0.0;
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    double mix = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      mix += q(static_cast<Eigen::Index>(j)) * density(y(i) - preds[j](i), centers[j].sigma_y);
    }
    total += std::log(std::max(mix, kDensityFloor));
  }
  return -total / static_cast<double>(psi.rows());
}

EStepResult e_step(const Matrix& psi, const Vector& y, const std::vector<ClusterCenter>& centers,
                   const Vector& q) {
  const auto k = static_cast<Eigen::Index>(centers.size());
  if (q.size() != k) throw ConfigError("e_step: q length does not match centre count");
  const auto preds = all_predictions(psi, centers);
  EStepResult out;
  out.W.resize(psi.rows(), k);
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      out.W(i, j) = q(j) * density(y(i) - preds[jj](i), centers[jj].sigma_y);
      total += out.W(i, j);
    }
    if (total > 0.0 && std::isfinite(total)) {
      out.W.row(i) /= total;
    } else {
      out.W.row(i).setConstant(1.0 / static_cast<double>(k));
      ++out.underflow_rows;
    }
  }
  if (out.underflow_rows > 0) {
    std::cerr << "warning: e_step: " << out.underflow_rows
              << " rows underflowed in every cluster; assigned uniformly\n";
  }
  return out;
}

LinearModel weighted_least_squares(const Matrix& psi, const Vector& y, const Vector& w) {
  const Eigen::Index n = psi.rows();
  const Eigen::Index d = psi.cols();
  Matrix Z(n, d + 1);
  Z.leftCols(d) = psi;
  Z.col(d).setOnes();
  const Vector sw = w.cwiseMax(0.0).cwiseSqrt();
  const Matrix Zw = Z.array().colwise() * sw.array();
  const Vector yw = y.cwiseProduct(sw);
  const Vector beta = Zw.completeOrthogonalDecomposition().solve(yw);
  return LinearModel{beta.head(d), beta(d)};
}

MStepResult m_step(const Matrix& psi, const Vector& y, const Matrix& W, double sigma_y,
                   double min_responsibility) {
  const Eigen::Index n = psi.rows();
  const Eigen::Index k = W.cols();
  if (W.rows() != n) throw ConfigError("m_step: responsibility rows do not match data");
  MStepResult out;
  out.q = W.colwise().sum().transpose() / static_cast<double>(n);
  const double floor = min_responsibility * static_cast<double>(n);

  std::vector<bool> alive(static_cast<std::size_t>(k));
  out.centers.resize(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    alive[jj] = W.col(j).sum() >= floor && W.col(j).sum() > 0.0;
    if (alive[jj]) out.centers[jj] = {weighted_least_squares(psi, y, W.col(j)), sigma_y};
  }

  // Rescue: refit starved clusters on the rows worst explained by the live ones.
  const bool any_alive = std::find(alive.begin(), alive.end(), true) != alive.end();
  Vector worst = Vector::Zero(n);
  if (any_alive) {
    worst.setConstant(std::numeric_limits<double>::infinity());
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!alive[static_cast<std::size_t>(j)]) continue;
      const Vector r = (y - out.centers[static_cast<std::size_t>(j)].model.predict(psi)).cwiseAbs();
      worst = worst.cwiseMin(r);
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return worst(a) > worst(b); });
  const Eigen::Index take = std::max<Eigen::Index>(psi.cols() + 2, n / std::max<Eigen::Index>(k, 1));
  std::size_t cursor = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    if (alive[jj]) continue;
    Vector w = Vector::Zero(n);
    for (Eigen::Index t = 0; t < std::min(take, n); ++t) {
      w(order[(cursor + static_cast<std::size_t>(t)) % order.size()]) = 1.0;
    }
    cursor += static_cast<std::size_t>(take);
    out.centers[jj] = {weighted_least_squares(psi, y, w), sigma_y};
    out.reseeded.push_back(static_cast<int>(j));
  }
  return out;
}

IndexVector hard_labels(const Matrix& W) {
  IndexVector out(static_cast<std::size_t>(W.rows()));
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < W.cols(); ++j) {
      if (W(i, j) > W(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

IndexVector sample_labels(const Matrix& W, std::uint64_t seed) {
  Rng rng(seed);
  IndexVector out(static_cast<std::size_t>(W.rows()));
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const Vector row = W.row(i).transpose();
    std::discrete_distribution<int> pick(row.data(), row.data() + row.size());
    out[static_cast<std::size_t>(i)] = pick(rng);
  }
  return out;
}

Matrix apply_selector(const Matrix& X, const Vector& selector) {
  if (selector.size() != X.cols()) throw ConfigError("psi selector length does not match d");
  if (!(selector.array() > 0.0).any()) {
    throw ConfigError(
        "psi selector is all zero: every feature is gated as invariant; fall back to psi = X");
  }
  return X.array().rowwise() * selector.transpose().array();
}

McResult fit_mc_from(const Matrix& psi, const Vector& y, std::vector<ClusterCenter> centers,
                     Vector q, const McConfig& config) {
  config.validate();
  if (static_cast<Eigen::Index>(centers.size()) != q.size()) {
    throw ConfigError("fit_mc: centre count does not match q");
  }
  McResult out;
  out.centers = std::move(centers);
  out.partition.q = std::move(q);
  double current = clustering_objective(psi, y, out.centers, out.partition.q);
  out.trace.push_back(current);
  EStepResult e = e_step(psi, y, out.centers, out.partition.q);
  out.underflow_rows += e.underflow_rows;
  out.partition.W = std::move(e.W);

  for (int it = 0; it < config.em_iters; ++it) {
    MStepResult m = m_step(psi, y, out.partition.W, config.sigma_y, config.min_responsibility);
    const double next = clustering_objective(psi, y, m.centers, m.q);
    if (!m.reseeded.empty() && next > current) break;  // a rescue may not undo progress
    out.centers = std::move(m.centers);
    out.partition.q = std::move(m.q);
    out.trace.push_back(next);
    e = e_step(psi, y, out.centers, out.partition.q);
    out.underflow_rows += e.underflow_rows;
    out.partition.W = std::move(e.W);
    const bool converged = current - next < config.tol;
    current = next;
    if (converged) break;
  }
  out.partition.hard_labels = hard_labels(out.partition.W);
  return out;
}

McResult fit_mc(const Matrix& X, const Vector& y, const Vector& psi_selector,
                const McConfig& config) {
  config.validate();
  if (X.rows() < 1 || y.size() != X.rows()) throw ConfigError("fit_mc: bad data shape");
  const Matrix psi = apply_selector(X, psi_selector);

  McResult best;
  bool have_best = false;
  for (int restart = 0; restart < config.restarts; ++restart) {
    Rng rng = make_rng(config.seed, 11 + static_cast<std::uint64_t>(restart));
    const Matrix W0 = seed_responsibilities(psi, y, config.K, config.init_strategy, rng);
    MStepResult init = m_step(psi, y, W0, config.sigma_y, config.min_responsibility);
    McResult run;
    if (config.em_iters == 0) {
      run.centers = std::move(init.centers);
      run.partition.q = std::move(init.q);
      run.partition.W = W0;
      run.partition.hard_labels = hard_labels(W0);
      run.trace.push_back(clustering_objective(psi, y, run.centers, run.partition.q));
    } else {
      run = fit_mc_from(psi, y, std::move(init.centers), std::move(init.q), config);
    }
    if (!have_best || run.trace.back() < best.trace.back()) {
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

std::vector<BicPoint> bic_sweep(const Matrix& X, const Vector& y, const Vector& psi_selector,
                                const McConfig& config, const std::vector<int>& ks) {
  std::vector<BicPoint> out;
  const auto n = static_cast<double>(X.rows());
  for (int k : ks) {
    McConfig c = config;
    c.K = k;
    const McResult r = fit_mc(X, y, psi_selector, c);
    BicPoint p;
    p.K = k;
    p.objective = r.trace.back();
    const double params = static_cast<double>(k) * static_cast<double>(X.cols() + 1) + (k - 1);
    p.bic = 2.0 * n * p.objective + params * std::log(n);
    out.push_back(p);
  }
  return out;
}

}  // namespace hrm::clustering
