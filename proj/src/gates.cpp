#include "hrm/gates.hpp"

#include <cmath>
#include <map>
#include <string>

namespace hrm {

Vector LinearModel::predict(const Matrix& X) const {
  return (X * theta).array() + intercept;
}

double LinearModel::mse(const Matrix& X, const Vector& y) const {
  return (predict(X) - y).squaredNorm() / static_cast<double>(y.size());
}

double Environment::total_weight() const {
  return weight.size() == 0 ? static_cast<double>(y.size()) : weight.sum();
}

std::vector<Environment> environments_from_labels(const Dataset& data, const IndexVector& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != data.rows()) {
    throw ConfigError("environment labels do not match row count");
  }
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<Environment> out;
  for (const auto& [label, rows] : groups) {
    Environment env;
    env.X.resize(static_cast<Eigen::Index>(rows.size()), data.dim());
    env.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      env.X.row(static_cast<Eigen::Index>(k)) = data.X.row(rows[k]);
      env.y(static_cast<Eigen::Index>(k)) = data.y(rows[k]);
    }
    out.push_back(std::move(env));
  }
  return out;
}

std::vector<Environment> environments_from_weights(const Dataset& data, const Matrix& W) {
  if (W.rows() != data.rows()) throw ConfigError("responsibility matrix row count mismatch");
  std::vector<Environment> out;
  for (Eigen::Index k = 0; k < W.cols(); ++k) {
    out.push_back(Environment{data.X, data.y, W.col(k)});
  }
  return out;
}

EnvMoments EnvMoments::of(const Environment& env) {
  const Eigen::Index n = env.X.rows();
  const Eigen::Index d = env.X.cols();
  if (n == 0) throw ConfigError("empty environment");
  Matrix Z(n, d + 1);
  Z.leftCols(d) = env.X;
  Z.col(d).setOnes();
  const double total = env.total_weight();
  if (!(total > 0.0)) throw ConfigError("environment has zero total weight");
  EnvMoments m;
  if (env.weight.size() == 0) {
    m.zz = Z.transpose() * Z / total;
    m.zy = Z.transpose() * env.y / total;
    m.yy = env.y.squaredNorm() / total;
  } else {
    const Matrix Zw = Z.array().colwise() * env.weight.array();
    m.zz = Zw.transpose() * Z / total;
    m.zy = Zw.transpose() * env.y / total;
    m.yy = (env.weight.array() * env.y.array().square()).sum() / total;
  }
  return m;
}

}  // namespace hrm

namespace hrm::gates {
namespace {

Vector clip01(const Vector& v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

// 1 where the clip is inactive, 0 where it saturates.
Vector clip_slope(const Vector& v) {
  return ((v.array() > 0.0) && (v.array() < 1.0)).cast<double>();
}

Vector augmented(const Vector& beta, double intercept) {
  Vector b(beta.size() + 1);
  b.head(beta.size()) = beta;
  b(beta.size()) = intercept;
  return b;
}

double quad_risk(const EnvMoments& m, const Vector& b) {
  return b.dot(m.zz * b) - 2.0 * b.dot(m.zy) + m.yy;
}

void check_shapes(const GateVector& gate, const LinearModel& model, Eigen::Index d) {
  if (gate.mu.size() != d || model.theta.size() != d) {
    throw ConfigError("gate/model dimension does not match data dimension " + std::to_string(d));
  }
}

}  // namespace

void MpConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("mp: lambda must be >= 0");
  if (!(alpha >= 0.0)) throw ConfigError("mp: alpha must be >= 0");
  if (!(sigma_gate > 0.0)) throw ConfigError("mp: sigma_gate must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("mp: learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("mp: lr_decay must be in (0,1]");
  if (epochs < 0) throw ConfigError("mp: epochs must be >= 0");
  if (mc_samples < 0) throw ConfigError("mp: mc_samples must be >= 0");
  if (penalty_warmup < 0) throw ConfigError("mp: penalty_warmup must be >= 0");
}

Vector gate_mask(const GateVector& gate, const Vector& noise) {
  return clip01(gate.mu + noise);
}

Vector hard_mask(const GateVector& gate) { return clip01(gate.mu); }

double expected_l0(const GateVector& gate) {
  if (!(gate.sigma_gate > 0.0)) throw ConfigError("expected_l0: sigma_gate must be > 0");
  double total = 0.0;
  for (double m : gate.mu) total += normal_cdf(m / gate.sigma_gate);
  return total;
}

double env_risk(const Environment& env, const GateVector& gate, const LinearModel& model,
                double alpha, int mc_samples, std::uint64_t seed) {
  if (env.X.rows() == 0) throw ConfigError("env_risk: empty environment");
  check_shapes(gate, model, env.X.cols());
  const EnvMoments m = EnvMoments::of(env);
  const double l0 = alpha * expected_l0(gate);
  if (mc_samples == 0) {
    return quad_risk(m, augmented(model.theta.cwiseProduct(hard_mask(gate)), model.intercept)) + l0;
  }
  Rng rng(seed);
  std::normal_distribution<double> eps(0.0, gate.sigma_gate);
  double acc = 0.0;
  Vector noise(gate.mu.size());
  for (int s = 0; s < mc_samples; ++s) {
    for (auto& v : noise) v = eps(rng);
    const Vector mask = gate_mask(gate, noise);
    acc += quad_risk(m, augmented(model.theta.cwiseProduct(mask), model.intercept));
  }
  return acc / mc_samples + l0;
}

std::vector<Vector> env_gradients(const std::vector<Environment>& envs, const GateVector& gate,
                                  const LinearModel& model) {
  std::vector<Vector> out;
  const Vector mask = hard_mask(gate);
  for (const auto& env : envs) {
    check_shapes(gate, model, env.X.cols());
    const EnvMoments m = EnvMoments::of(env);
    const Eigen::Index d = mask.size();
    const Vector b = augmented(model.theta.cwiseProduct(mask), model.intercept);
    const Vector c = (m.zz * b - m.zy).head(d);
    out.push_back(2.0 * mask.cwiseProduct(c));
  }
  return out;
}

namespace {

// Elementwise unbiased variance across environments.
Vector across_env_variance(const std::vector<Vector>& g) {
  const auto k = static_cast<double>(g.size());
  Vector mean = Vector::Zero(g.front().size());
  for (const auto& v : g) mean += v;
  mean /= k;
  Vector var = Vector::Zero(mean.size());
  for (const auto& v : g) var += (v - mean).cwiseAbs2();
  return var / (k - 1.0);
}

}  // namespace

double variance_penalty(const std::vector<Environment>& envs, const GateVector& gate,
                        const LinearModel& model) {
  if (envs.size() < 2) throw ConfigError("variance_penalty: need at least 2 environments");
  const auto g = env_gradients(envs, gate, model);
  return across_env_variance(g).cwiseProduct(hard_mask(gate)).squaredNorm();
}

ObjectiveValue objective(const std::vector<EnvMoments>& envs, const GateVector& gate,
                         const LinearModel& model, double lambda, double alpha,
                         const std::vector<Vector>& noise) {
  if (envs.empty()) throw ConfigError("objective: no environments");
  const Eigen::Index d = gate.mu.size();
  if (model.theta.size() != d || envs.front().zz.rows() != d + 1) {
    throw ConfigError("objective: dimension mismatch");
  }
  const auto k = static_cast<double>(envs.size());

  ObjectiveValue out;
  out.grad_theta = Vector::Zero(d);
  out.grad_mu = Vector::Zero(d);

  // Risk, averaged uniformly over environments and over noise samples.
  const std::vector<Vector> deterministic{Vector::Zero(d)};
  const auto& draws = noise.empty() ? deterministic : noise;
  const double scale = 1.0 / (k * static_cast<double>(draws.size()));
  for (const auto& eps : draws) {
    const Vector pre = gate.mu + eps;
    const Vector mask = clip01(pre);
    const Vector slope = clip_slope(pre);
    const Vector b = augmented(model.theta.cwiseProduct(mask), model.intercept);
    for (const auto& m : envs) {
      out.risk += scale * quad_risk(m, b);
      const Vector grad_b = 2.0 * (m.zz * b - m.zy);
      out.grad_theta += scale * grad_b.head(d).cwiseProduct(mask);
      out.grad_intercept += scale * grad_b(d);
      out.grad_mu += scale * grad_b.head(d).cwiseProduct(model.theta).cwiseProduct(slope);
    }
  }

  out.l0 = expected_l0(gate);
  for (Eigen::Index i = 0; i < d; ++i) {
    out.grad_mu(i) += alpha * normal_pdf(gate.mu(i) / gate.sigma_gate) / gate.sigma_gate;
  }

  if (lambda > 0.0 && envs.size() >= 2) {
    const Vector mask = hard_mask(gate);
    const Vector slope = clip_slope(gate.mu);
    const Vector b = augmented(model.theta.cwiseProduct(mask), model.intercept);
    std::vector<Vector> c;  // E_e[r x], r the residual
    std::vector<Vector> g;  // per-environment theta-gradients
    for (const auto& m : envs) {
      c.push_back((m.zz * b - m.zy).head(d));
      g.push_back(2.0 * mask.cwiseProduct(c.back()));
    }
    const Vector var = across_env_variance(g);
    Vector mean = Vector::Zero(d);
    for (const auto& v : g) mean += v;
    mean /= k;
    out.penalty = var.cwiseProduct(mask).squaredNorm();

    // dP/dg_e and dP/dc_e; c_e is linear in (theta*mask, intercept).
    Vector grad_mask = 2.0 * mask.cwiseProduct(var.cwiseAbs2());
    Vector grad_theta = Vector::Zero(d);
    double grad_intercept = 0.0;
    for (std::size_t e = 0; e < envs.size(); ++e) {
      const Vector dp_dg =
          (2.0 * mask.cwiseAbs2().cwiseProduct(var)).cwiseProduct(2.0 * (g[e] - mean) / (k - 1.0));
      const Vector dp_dc = 2.0 * mask.cwiseProduct(dp_dg);
      const Vector back = envs[e].zz.topRows(d).transpose() * dp_dc;  // d+1
      grad_theta += back.head(d).cwiseProduct(mask);
      grad_intercept += back(d);
      grad_mask += 2.0 * dp_dg.cwiseProduct(c[e]) + back.head(d).cwiseProduct(model.theta);
    }
    out.grad_theta += lambda * grad_theta;
    out.grad_intercept += lambda * grad_intercept;
    out.grad_mu += lambda * grad_mask.cwiseProduct(slope);
  }

  out.value = out.risk + alpha * out.l0 + lambda * out.penalty;
  return out;
}

namespace {

// Uniform-over-environment least squares on the masked design, used as the
// starting theta when no warm start is given.
LinearModel initial_model(const std::vector<EnvMoments>& envs, const Vector& mask) {
  const Eigen::Index d = mask.size();
  Matrix zz = Matrix::Zero(d + 1, d + 1);
  Vector zy = Vector::Zero(d + 1);
  for (const auto& m : envs) {
    zz += m.zz;
    zy += m.zy;
  }
  zz.diagonal().array() += 1e-8 * (1.0 + zz.diagonal().cwiseAbs().maxCoeff());
  const Vector beta = zz.ldlt().solve(zy);
  LinearModel model;
  model.theta = Vector::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (mask(i) > 0.0) model.theta(i) = beta(i) / mask(i);
  }
  model.intercept = beta(d);
  return model;
}

// Adam over the packed parameter vector [theta, intercept, mu].
struct AdamState {
  explicit AdamState(Eigen::Index d) : m(Vector::Zero(2 * d + 1)), v(Vector::Zero(2 * d + 1)) {}

  void step(MpResult& p, const ObjectiveValue& g, double lr) {
    const Eigen::Index d = p.model.theta.size();
    Vector grad(2 * d + 1);
    grad << g.grad_theta, g.grad_intercept, g.grad_mu;
    ++t;
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    const Vector delta =
        lr * (m / c1).array() / ((v / c2).array().sqrt() + kEps);
    p.model.theta -= delta.head(d);
    p.model.intercept -= delta(d);
    p.gate.mu -= delta.tail(d);
  }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  Vector m, v;
  int t = 0;
};

}  // namespace

MpResult fit_mp(const std::vector<Environment>& envs, const MpConfig& config,
                const std::optional<std::pair<GateVector, LinearModel>>& warm_start) {
  config.validate();
  if (envs.size() < 2) throw ConfigError("fit_mp: need at least 2 environments");
  std::vector<EnvMoments> moments;
  for (const auto& env : envs) {
    if (env.X.rows() == 0 || !(env.total_weight() > 0.0)) {
      throw ConfigError("fit_mp: empty environment");
    }
    moments.push_back(EnvMoments::of(env));
  }
  const Eigen::Index d = envs.front().X.cols();

  MpResult out;
  if (warm_start) {
    out.gate = warm_start->first;
    out.model = warm_start->second;
    check_shapes(out.gate, out.model, d);
  } else {
    out.gate.mu = Vector::Constant(d, 0.5);
    out.gate.sigma_gate = config.sigma_gate;
    out.model = initial_model(moments, hard_mask(out.gate));
  }

  Rng rng = make_rng(config.seed, 7);
  std::normal_distribution<double> eps(0.0, out.gate.sigma_gate);
  std::vector<Vector> noise(static_cast<std::size_t>(config.mc_samples), Vector(d));
  double lr = config.learning_rate;
  AdamState adam(d);
  out.trace.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (auto& v : noise) {
      for (auto& x : v) x = eps(rng);
    }
    const double ramp = config.penalty_warmup > 0
                            ? std::min(1.0, static_cast<double>(epoch + 1) / config.penalty_warmup)
                            : 1.0;
    const ObjectiveValue step =
        objective(moments, out.gate, out.model, ramp * config.lambda, config.alpha, noise);
    if (!std::isfinite(step.value) || !step.grad_theta.allFinite() || !step.grad_mu.allFinite()) {
      throw TrainingError("fit_mp: objective diverged at epoch " + std::to_string(epoch));
    }
    if (config.optimizer == Optimizer::Adam) {
      adam.step(out, step, lr);
    } else {
      out.model.theta -= lr * step.grad_theta;
      out.model.intercept -= lr * step.grad_intercept;
      out.gate.mu -= lr * step.grad_mu;
    }
    lr *= config.lr_decay;

    const double value =
        objective(moments, out.gate, out.model, config.lambda, config.alpha, {}).value;
    if (!std::isfinite(value)) {
      throw TrainingError("fit_mp: objective diverged at epoch " + std::to_string(epoch));
    }
    out.trace.push_back(value);
  }
  return out;
}

LinearModel effective_model(const GateVector& gate, const LinearModel& model) {
  return LinearModel{model.theta.cwiseProduct(hard_mask(gate)), model.intercept};
}

}  // namespace hrm::gates
