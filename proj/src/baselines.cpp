#include "hrm/baselines.hpp"

#include <cmath>
#include <functional>

namespace hrm::baselines {
namespace {

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};

using Objective = std::function<ValueGrad(const Vector&)>;

// Gradient descent with Armijo backtracking; the step grows back slowly
// after each accepted move.
Vector descend(const Objective& f, Vector x, double lr, int epochs, const std::string& who) {
  double step = lr;
  ValueGrad cur = f(x);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    if (!std::isfinite(cur.value) || !cur.grad.allFinite()) {
      throw TrainingError(who + ": objective diverged at epoch " + std::to_string(epoch));
    }
    const double g2 = cur.grad.squaredNorm();
    if (g2 < 1e-24) break;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Vector trial = x - step * cur.grad;
      ValueGrad next = f(trial);
      if (std::isfinite(next.value) && next.value <= cur.value - 1e-4 * step * g2) {
        x = trial;
        cur = std::move(next);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease is representable
    step = std::min(lr, step * 1.25);
  }
  return x;
}

Vector augmented(const LinearModel& m) {
  Vector b(m.theta.size() + 1);
  b.head(m.theta.size()) = m.theta;
  b(m.theta.size()) = m.intercept;
  return b;
}

LinearModel split(const Vector& b) {
  const Eigen::Index d = b.size() - 1;
  return LinearModel{b.head(d), b(d)};
}

double quad(const EnvMoments& m, const Vector& b) {
  return b.dot(m.zz * b) - 2.0 * b.dot(m.zy) + m.yy;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::ERM: return "ERM";
    case Method::IRM: return "IRM";
    case Method::DRO: return "DRO";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "ERM" || name == "erm") return Method::ERM;
  if (name == "IRM" || name == "irm") return Method::IRM;
  if (name == "DRO" || name == "dro") return Method::DRO;
  throw ConfigError("unknown baseline method '" + name + "'");
}

void BaselineConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("baseline: learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("baseline: epochs must be >= 0");
  if (method == Method::IRM && !(irm_lambda >= 0.0)) {
    throw ConfigError("baseline: irm_lambda must be >= 0");
  }
  if (method == Method::DRO) {
    if (!(dro_gamma > 0.0)) throw ConfigError("baseline: dro_gamma must be > 0");
    if (dro_inner_steps < 0) throw ConfigError("baseline: dro_inner_steps must be >= 0");
    if (!(dro_inner_lr > 0.0)) throw ConfigError("baseline: dro_inner_lr must be > 0");
  }
}

LinearModel fit_erm(const Dataset& data, const BaselineConfig& config) {
  config.validate();
  data.validate();
  const EnvMoments m = EnvMoments::of(Environment{data.X, data.y, {}});
  const Objective f = [&m](const Vector& b) {
    return ValueGrad{quad(m, b), 2.0 * (m.zz * b - m.zy)};
  };
  return split(descend(f, Vector::Zero(data.dim() + 1), config.learning_rate, config.epochs, "erm"));
}

double irm_dummy_derivative(const Environment& env, const LinearModel& model) {
  const EnvMoments m = EnvMoments::of(env);
  const Vector b = augmented(model);
  return 2.0 * (b.dot(m.zz * b) - b.dot(m.zy));
}

double irm_penalty(const std::vector<Environment>& envs, const LinearModel& model) {
  double total = 0.0;
  for (const auto& env : envs) {
    const double g = irm_dummy_derivative(env, model);
    total += g * g;
  }
  return total;
}

LinearModel fit_irm(const std::vector<Environment>& envs, const BaselineConfig& config) {
  config.validate();
  if (envs.size() < 2) throw ConfigError("fit_irm: need at least 2 labelled environments");
  std::vector<EnvMoments> moments;
  for (const auto& env : envs) moments.push_back(EnvMoments::of(env));
  const double lambda = config.irm_lambda;

  const Objective pooled = [&moments](const Vector& b) {
    ValueGrad out{0.0, Vector::Zero(b.size())};
    for (const auto& m : moments) {
      out.value += quad(m, b);
      out.grad += 2.0 * (m.zz * b - m.zy);
    }
    return out;
  };
  const Objective f = [&moments, lambda](const Vector& b) {
    ValueGrad out{0.0, Vector::Zero(b.size())};
    for (const auto& m : moments) {
      const Vector zzb = m.zz * b;
      out.value += b.dot(zzb) - 2.0 * b.dot(m.zy) + m.yy;
      out.grad += 2.0 * (zzb - m.zy);
      const double dw = 2.0 * (b.dot(zzb) - b.dot(m.zy));
      out.value += lambda * dw * dw;
      out.grad += lambda * 2.0 * dw * 2.0 * (2.0 * zzb - m.zy);
    }
    return out;
  };
  const Eigen::Index d = envs.front().X.cols();
  Vector b = descend(pooled, Vector::Zero(d + 1), config.learning_rate, config.epochs, "irm");
  return split(descend(f, b, config.learning_rate, config.epochs, "irm"));
}

Vector dro_inner_max(const LinearModel& model, const Vector& x, double y, double gamma,
                     int steps, double step_size) {
  Vector delta = Vector::Zero(x.size());
  // Larger steps overshoot the -gamma |delta|^2 term and diverge.
  const double lr = std::min(step_size, 0.5 / gamma);
  for (int t = 0; t < steps; ++t) {
    const double r = model.theta.dot(x + delta) + model.intercept - y;
    delta += lr * (2.0 * r * model.theta - 2.0 * gamma * delta);
  }
  return delta;
}

DroResult fit_dro(const Dataset& data, const BaselineConfig& config) {
  config.validate();
  data.validate();
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.dim();
  const EnvMoments m = EnvMoments::of(Environment{data.X, data.y, {}});
  const double curvature = 2.0 * m.zz.selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff();
  const double lr = std::min(config.learning_rate, 0.9 / curvature);
  const double inner_lr = std::min(config.dro_inner_lr, 0.5 / config.dro_gamma);

  DroResult out;
  out.model.theta = Vector::Zero(d);
  out.robust_loss.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Every inner iterate stays on span(theta): delta = a * theta.
    const double tt = out.model.theta.squaredNorm();
    const Vector base = out.model.predict(data.X) - data.y;
    Vector grad_theta = Vector::Zero(d);
    double grad_b = 0.0;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double a = 0.0;
      for (int t = 0; t < config.dro_inner_steps; ++t) {
        const double r = base(i) + a * tt;
        a += inner_lr * (2.0 * r - 2.0 * config.dro_gamma * a);
      }
      const double r = base(i) + a * tt;
      loss += r * r;
      grad_theta += 2.0 * r * (data.X.row(i).transpose() + a * out.model.theta);
      grad_b += 2.0 * r;
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss) || !grad_theta.allFinite()) {
      throw TrainingError("dro: objective diverged at epoch " + std::to_string(epoch));
    }
    out.robust_loss.push_back(loss);
    out.model.theta -= lr * grad_theta / static_cast<double>(n);
    out.model.intercept -= lr * grad_b / static_cast<double>(n);
  }
  return out;
}

}  // namespace hrm::baselines
