#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "hrm/clustering.hpp"
#include "hrm/driver.hpp"

using namespace hrm;
using namespace hrm::clustering;

namespace {

ClusterCenter center(double slope, double intercept, double sigma) {
  return {LinearModel{Vector::Constant(1, slope), intercept}, sigma};
}

double pdf(double r, double s) {
  return std::exp(-0.5 * r * r / (s * s)) / (std::sqrt(2.0 * std::numbers::pi) * s);
}

Dataset planted(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> n01;
  Dataset d;
  d.X = testing::normal_matrix(seed + 1000, n, 1);
  d.y.resize(n);
  IndexVector labels;
  for (int i = 0; i < n; ++i) {
    const int z = coin(rng) ? 1 : 0;
    labels.push_back(z);
    d.y(i) = (z ? -2.0 : 2.0) * d.X(i, 0) + 0.1 * n01(rng);
  }
  d.env_labels = labels;
  return d;
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("centre likelihood is a normal density") {
  const Vector psi = Vector::Constant(1, 1.0);
  CHECK(center_likelihood(center(2.0, 0.0, 1.0), psi, 2.0) ==
        doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
  CHECK(center_likelihood(center(2.0, 0.0, 0.7), psi, 2.7) == doctest::Approx(pdf(0.7, 0.7)));
  CHECK(center_likelihood(center(2.0, 0.0, 0.5), psi, 4.0) == doctest::Approx(pdf(2.0, 0.5)));
  CHECK(center_likelihood(center(2.0, 0.0, 0.5), psi, 4.0) == doctest::Approx(2.6766e-4).epsilon(1e-3));
}

TEST_CASE("clustering objective") {
  const Matrix psi = (Matrix(4, 1) << 0.0, 1.0, -1.0, 2.0).finished();
  const Vector y = (Vector(4) << 0.5, 1.0, -2.0, 3.0).finished();
  const auto c1 = center(1.0, 0.0, 0.8);

  // One component is the mean Gaussian negative log-likelihood.
  double sq = 0.0;
  for (int i = 0; i < 4; ++i) sq += std::pow(y(i) - psi(i, 0), 2);
  const double nll = 0.5 * std::log(2 * std::numbers::pi * 0.64) + (sq / 4) / (2 * 0.64);
  CHECK(clustering_objective(psi, y, {c1}, Vector::Ones(1)) == doctest::Approx(nll));
  CHECK(clustering_objective(psi, y, {c1, c1}, Vector::Constant(2, 0.5)) == doctest::Approx(nll));

  const auto c2 = center(-1.0, 0.5, 0.8);
  const Vector q = (Vector(2) << 0.3, 0.7).finished();
  double brute = 0.0;
  for (int i = 0; i < 4; ++i) {
    brute -= std::log(0.3 * pdf(y(i) - psi(i, 0), 0.8) + 0.7 * pdf(y(i) + psi(i, 0) - 0.5, 0.8));
  }
  CHECK(clustering_objective(psi, y, {c1, c2}, q) == doctest::Approx(brute / 4));
}

TEST_CASE("e-step") {
  const Matrix psi = Matrix::Ones(1, 1);
  const Vector y = Vector::Ones(1);
  const auto es = e_step(psi, y, {center(1.0, 0.0, 1.0), center(-1.0, 0.0, 1.0)}, Vector::Constant(2, 0.5));
  const double oracle = std::exp(0.0) / (std::exp(0.0) + std::exp(-2.0));
  CHECK(es.W(0, 0) == doctest::Approx(oracle));
  CHECK(es.W(0, 0) == doctest::Approx(0.8808).epsilon(1e-4));

  const Matrix P = testing::normal_matrix(3, 12, 1);
  const Vector Y = testing::normal_vector(4, 12);
  const Vector q = (Vector(3) << 0.2, 0.5, 0.3).finished();
  const auto c = center(0.4, 0.1, 0.9);
  const auto same = e_step(P, Y, {c, c, c}, q);
  for (int i = 0; i < 12; ++i) CHECK((same.W.row(i).transpose() - q).norm() < 1e-12);

  const auto degenerate = e_step(P, Y, {center(1, 0, 1), center(-1, 0, 1)}, (Vector(2) << 1, 0).finished());
  CHECK(degenerate.W.col(0).minCoeff() == doctest::Approx(1.0));
}

TEST_CASE("weighted least squares matches the normal equations") {
  const Matrix X = testing::normal_matrix(5, 5, 2);
  const Vector y = testing::normal_vector(6, 5);
  const Vector w = (Vector(5) << 0.2, 1.0, 0.5, 2.0, 0.7).finished();
  const Vector oracle = testing::normal_equations(X, y, w);
  const LinearModel fit = weighted_least_squares(X, y, w);
  CHECK(std::abs(fit.theta(0) - oracle(0)) < 1e-9);
  CHECK(std::abs(fit.theta(1) - oracle(1)) < 1e-9);
  CHECK(std::abs(fit.intercept - oracle(2)) < 1e-9);
}

TEST_CASE("m-step") {
  const Matrix X = testing::normal_matrix(7, 40, 2);
  const Vector y = X.col(0) - X.col(1) + 0.3 * testing::normal_vector(8, 40);
  const Vector ols = testing::normal_equations(X, y);

  const auto uniform = m_step(X, y, Matrix::Constant(40, 2, 0.5), 0.7, 1e-3);
  CHECK(uniform.q(0) == doctest::Approx(0.5));
  for (const auto& c : uniform.centers) {
    CHECK((c.model.theta - ols.head(2)).norm() < 1e-9);
    CHECK(c.model.intercept == doctest::Approx(ols(2)));
    CHECK(c.sigma_y == 0.7);
  }

  Matrix W = Matrix::Zero(40, 3);
  W.col(0).setOnes();
  const auto all_first = m_step(X, y, W, 0.7, 1e-3);
  CHECK(all_first.q(0) == doctest::Approx(1.0));
  CHECK(all_first.q.sum() == doctest::Approx(1.0));
  CHECK((all_first.centers[0].model.theta - ols.head(2)).norm() < 1e-9);
  CHECK(all_first.reseeded.size() == 2);
}

TEST_CASE("planted two-regression recovery") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Dataset d = planted(s, 400);
    McConfig cfg;
    cfg.seed = s;
    cfg.init_strategy = InitStrategy::RegressionPlusPlus;
    cfg.restarts = 3;
    const auto fit = fit_mc(d.X, d.y, Vector::Ones(1), cfg);
    CHECK(driver::partition_agreement(fit.partition.hard_labels, *d.env_labels) >= 0.95);
  }
}

TEST_CASE("joint-space seeding often stalls on crossing regressions") {
  int recovered = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Dataset d = planted(s, 400);
    McConfig cfg;
    cfg.seed = s;
    const auto fit = fit_mc(d.X, d.y, Vector::Ones(1), cfg);
    recovered += driver::partition_agreement(fit.partition.hard_labels, *d.env_labels) >= 0.95;
  }
  // Documents the limitation that motivates the line-based seeding.
  CHECK(recovered < 10);
}

TEST_CASE("restarts keep the lowest objective") {
  const Dataset d = planted(12, 300);
  McConfig one;
  one.seed = 4;
  one.init_strategy = InitStrategy::RegressionPlusPlus;
  McConfig many = one;
  many.restarts = 4;
  const auto a = fit_mc(d.X, d.y, Vector::Ones(1), one);
  const auto b = fit_mc(d.X, d.y, Vector::Ones(1), many);
  CHECK(b.trace.back() <= a.trace.back() + 1e-12);
}

TEST_CASE("permuting the initial centres permutes the labels") {
  const Dataset d = planted(6, 300);
  McConfig cfg;
  const std::vector<ClusterCenter> ab{center(1.5, 0.1, 0.7), center(-1.0, 0.0, 0.7)};
  const std::vector<ClusterCenter> ba{ab[1], ab[0]};
  const Vector q = (Vector(2) << 0.6, 0.4).finished();
  const auto x = fit_mc_from(d.X, d.y, ab, q, cfg);
  const auto y = fit_mc_from(d.X, d.y, ba, q.reverse(), cfg);
  CHECK((x.partition.W.col(0) - y.partition.W.col(1)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((x.partition.W.col(1) - y.partition.W.col(0)).cwiseAbs().maxCoeff() < 1e-9);
  for (std::size_t i = 0; i < x.partition.hard_labels.size(); ++i) {
    CHECK(x.partition.hard_labels[i] == 1 - y.partition.hard_labels[i]);
  }
}

TEST_CASE("EM never increases the objective") {
  const Dataset d = planted(3, 300);
  Matrix X(300, 3);
  X << d.X, testing::normal_matrix(9, 300, 2);
  McConfig cfg;
  cfg.K = 3;
  cfg.tol = 0.0;
  cfg.seed = 5;
  const auto fit = fit_mc(X, d.y, Vector::Ones(3), cfg);
  REQUIRE(fit.trace.size() > 2);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] <= fit.trace[i - 1] + 1e-9);
  const auto rows = fit.partition.W.rowwise().sum();
  CHECK((rows.array() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("degenerate cluster counts and iterations") {
  const Dataset d = planted(1, 100);
  McConfig cfg;
  cfg.K = 1;
  const auto single = fit_mc(d.X, d.y, Vector::Ones(1), cfg);
  for (int l : single.partition.hard_labels) CHECK(l == 0);
  CHECK(single.partition.q(0) == doctest::Approx(1.0));

  cfg.K = 2;
  cfg.em_iters = 0;
  std::vector<ClusterCenter> start{center(1.0, 0.0, 0.7), center(-1.0, 0.0, 0.7)};
  const Vector q = (Vector(2) << 0.4, 0.6).finished();
  const auto none = fit_mc_from(d.X, d.y, start, q, cfg);
  CHECK(none.centers[0].model.theta(0) == 1.0);
  CHECK(none.centers[1].model.theta(0) == -1.0);
  CHECK(none.partition.q == q);
  CHECK(none.trace.size() == 1);
}

TEST_CASE("selector and labels helpers") {
  const Matrix X = testing::normal_matrix(2, 5, 3);
  const Vector sel = (Vector(3) << 0.0, 0.5, 1.0).finished();
  const Matrix psi = apply_selector(X, sel);
  CHECK(psi.col(0).norm() == 0.0);
  CHECK((psi.col(1) - 0.5 * X.col(1)).norm() == 0.0);
  CHECK_THROWS_AS(apply_selector(X, Vector::Zero(3)), ConfigError);

  const Matrix W = (Matrix(3, 2) << 0.2, 0.8, 0.5, 0.5, 1.0, 0.0).finished();
  CHECK(hard_labels(W) == IndexVector{1, 0, 0});
  const auto s = sample_labels(W, 4);
  CHECK(s[2] == 0);
  CHECK(sample_labels(W, 4) == s);
}

TEST_CASE("bic sweep covers the requested K values") {
  const Dataset d = planted(2, 200);
  const auto pts = bic_sweep(d.X, d.y, Vector::Ones(1), McConfig{}, {1, 2, 3});
  REQUIRE(pts.size() == 3);
  CHECK(pts[1].bic < pts[0].bic);
}

TEST_CASE("configuration checks") {
  McConfig cfg;
  cfg.K = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = McConfig{};
  cfg.sigma_y = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

}  // TEST_SUITE
