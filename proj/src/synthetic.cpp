#include "hrm/synthetic.hpp"

#include <cmath>
#include <sstream>

namespace hrm::synthetic {
namespace {

constexpr std::uint64_t kStreamMajor = 1;
constexpr std::uint64_t kStreamMinor = 2;
constexpr std::uint64_t kStreamTheta = 3;
constexpr std::uint64_t kStreamGrid = 100;
constexpr std::uint64_t kStreamEnv = 1000;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct RawDraw {
  Vector x;
  double f = 0.0;
};

// One draw from the unselected generative model.
RawDraw draw_raw(const SelectionBiasConfig& c, const Vector& theta, Rng& rng) {
  std::normal_distribution<double> std_normal(0.0, 1.0);
  Vector z(c.n_phi + 1);
  for (auto& v : z) v = std_normal(rng);
  RawDraw out;
  out.x.resize(c.d);
  for (int i = 0; i < c.n_phi; ++i) out.x(i) = 0.8 * z(i) + 0.2 * z(i + 1);
  for (int j = c.n_phi; j < c.d; ++j) out.x(j) = std_normal(rng);
  out.f = invariant_response(out.x.head(c.n_phi), theta, c.beta, 0.0);
  return out;
}

}  // namespace

void SelectionBiasConfig::validate() const {
  if (n_phi < 3) throw ConfigError("selection bias: n_phi must be >= 3");
  if (d <= n_phi) throw ConfigError("selection bias: d must exceed n_phi");
  if (n_b < 1 || n_b > n_psi()) throw ConfigError("selection bias: need 1 <= n_b <= n_psi");
  if (!(std::abs(r) > 1.0)) throw ConfigError("selection bias: |r| must exceed 1");
  if (!(std::abs(r_minor) > 1.0)) throw ConfigError("selection bias: |r_minor| must exceed 1");
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw ConfigError("selection bias: kappa outside [0,1]");
  if (sum < 1) throw ConfigError("selection bias: sum must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("selection bias: noise_std must be >= 0");
  if (max_attempts_factor < 1) throw ConfigError("selection bias: max_attempts_factor < 1");
}

void AntiCausalConfig::validate() const {
  if (n_phi < 3) throw ConfigError("anti-causal: n_phi must be >= 3");
  if (n_psi < 1) throw ConfigError("anti-causal: n_psi must be >= 1");
  if (means.empty() || means.size() != sigmas.size()) {
    throw ConfigError("anti-causal: need one sigma per component mean");
  }
  for (const auto& m : means) {
    if (m.size() != n_phi) throw ConfigError("anti-causal: component mean has wrong length");
  }
  for (double s : sigmas) {
    if (!(s > 0.0)) throw ConfigError("anti-causal: component sigma must be > 0");
  }
  if (theta_phi.size() != n_phi || theta_psi.size() != n_psi) {
    throw ConfigError("anti-causal: theta vectors have wrong length");
  }
}

Vector default_theta_phi(int n_phi) {
  static constexpr double kPattern[] = {0.5, -1.0, 1.0, -0.5, 1.0, -1.0};
  Vector theta(n_phi);
  for (int i = 0; i < n_phi; ++i) theta(i) = kPattern[i % 6];
  return theta;
}

double invariant_response(const Vector& phi, const Vector& theta_phi, double beta, double noise) {
  if (phi.size() != theta_phi.size()) {
    throw ConfigError("invariant_response: phi and theta_phi lengths differ");
  }
  if (phi.size() < 3) throw ConfigError("invariant_response: need at least 3 invariant dims");
  return theta_phi.dot(phi) + beta * phi(0) * phi(1) * phi(2) + noise;
}

double selection_probability(double y_clean, const Vector& v_b, double r) {
  if (!(std::abs(r) > 1.0)) throw ConfigError("selection_probability: |r| must exceed 1");
  double exponent = 0.0;
  for (double v : v_b) exponent += std::abs(y_clean - sign(r) * v);
  return std::pow(std::abs(r), -5.0 * exponent);
}

Dataset generate_selection_env(const SelectionBiasConfig& config, double r, int n,
                               std::uint64_t seed) {
  config.validate();
  if (!(std::abs(r) > 1.0)) throw ConfigError("selection bias: |r| must exceed 1");
  if (n < 0) throw ConfigError("selection bias: negative sample count");
  const Vector theta = default_theta_phi(config.n_phi);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> eps(0.0, config.noise_std);

  Dataset out;
  out.X.resize(n, config.d);
  out.y.resize(n);
  const long long budget = static_cast<long long>(config.max_attempts_factor) * std::max(n, 1);
  long long attempts = 0;
  int accepted = 0;
  while (accepted < n) {
    if (attempts++ >= budget) {
      std::ostringstream msg;
      msg << "selection bias: accepted " << accepted << " of " << n << " samples after "
          << budget << " attempts (r=" << r << ", n_b=" << config.n_b << ")";
      throw GenerationError(msg.str());
    }
    RawDraw draw = draw_raw(config, theta, rng);
    const double p = selection_probability(draw.f, draw.x.segment(config.n_phi, config.n_b), r);
    if (unif(rng) > p) continue;
    out.X.row(accepted) = draw.x.transpose();
    out.y(accepted) = draw.f + eps(rng);
    ++accepted;
  }
  IndexVector inv(config.n_phi);
  for (int i = 0; i < config.n_phi; ++i) inv[i] = i;
  out.invariant_dims = std::move(inv);
  out.env_labels = IndexVector(static_cast<std::size_t>(n), 0);
  out.seed = seed;
  return out;
}

Dataset generate_selection_bias(const SelectionBiasConfig& config, std::uint64_t seed) {
  config.validate();
  const int n_major = static_cast<int>(std::lround(config.kappa * config.sum));
  const int n_minor = config.sum - n_major;
  Dataset major = generate_selection_env(config, config.r, n_major, mix_seed(seed, kStreamMajor));
  Dataset minor =
      generate_selection_env(config, config.r_minor, n_minor, mix_seed(seed, kStreamMinor));
  minor.env_labels = IndexVector(static_cast<std::size_t>(n_minor), 1);
  Dataset out = concat({major, minor});
  out.seed = seed;
  return out;
}

Dataset sample_unselected(const SelectionBiasConfig& config, int n, std::uint64_t seed) {
  config.validate();
  const Vector theta = default_theta_phi(config.n_phi);
  Rng rng(seed);
  std::normal_distribution<double> eps(0.0, config.noise_std);
  Dataset out;
  out.X.resize(n, config.d);
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    RawDraw draw = draw_raw(config, theta, rng);
    out.X.row(i) = draw.x.transpose();
    out.y(i) = draw.f + eps(rng);
  }
  out.seed = seed;
  return out;
}

std::vector<Dataset> generate_test_grid(const SelectionBiasConfig& config,
                                        const std::vector<double>& r_values, int n_per_env,
                                        std::uint64_t seed) {
  std::vector<Dataset> out;
  out.reserve(r_values.size());
  for (std::size_t k = 0; k < r_values.size(); ++k) {
    Dataset env = generate_selection_env(config, r_values[k], n_per_env,
                                         mix_seed(seed, kStreamGrid + k));
    env.env_labels = IndexVector(static_cast<std::size_t>(n_per_env), static_cast<int>(k));
    out.push_back(std::move(env));
  }
  return out;
}

std::vector<double> default_test_r_values() {
  return {-3.0, -2.7, -2.3, -1.9, -1.5, 1.5, 1.9, 2.3, 2.7, 3.0};
}

AntiCausalConfig default_anti_causal_config(int n_phi, int n_psi, std::uint64_t seed) {
  if (n_phi < 3 || n_psi < 1) throw ConfigError("anti-causal: need n_phi >= 3 and n_psi >= 1");
  AntiCausalConfig c;
  c.n_phi = n_phi;
  c.n_psi = n_psi;
  // The published means live in the last two invariant coordinates.
  auto mean = [n_phi](double a, double b) {
    Vector m = Vector::Zero(n_phi);
    m(n_phi - 2) = a;
    m(n_phi - 1) = b;
    return m;
  };
  c.means = {mean(1, 1), mean(1, -1), mean(-1, 1)};
  for (int i = 3; i < 10; ++i) c.means.push_back(mean(-1, -1));
  c.sigmas = {0.2, 0.5, 1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0};

  Rng rng = make_rng(seed, kStreamTheta);
  std::normal_distribution<double> phi_draw(1.0, 1.0);
  std::normal_distribution<double> psi_draw(0.5, std::sqrt(0.1));
  c.theta_phi.resize(n_phi);
  for (auto& v : c.theta_phi) v = phi_draw(rng);
  c.theta_psi.resize(n_psi);
  for (auto& v : c.theta_psi) v = psi_draw(rng);
  return c;
}

std::vector<EnvSpec> one_hot_env_specs(const AntiCausalConfig& config, int n_per_env) {
  return dominant_env_specs(config, n_per_env, 1.0);
}

std::vector<EnvSpec> dominant_env_specs(const AntiCausalConfig& config, int n_per_env,
                                        double dominance) {
  if (!(dominance >= 0.0 && dominance <= 1.0)) {
    throw ConfigError("anti-causal: dominance must lie in [0, 1]");
  }
  const int k = config.components();
  std::vector<EnvSpec> out;
  for (int i = 0; i < k; ++i) {
    EnvSpec e;
    e.weights = Vector::Constant(k, (1.0 - dominance) / k);
    e.weights(i) += dominance;
    e.n = n_per_env;
    out.push_back(std::move(e));
  }
  return out;
}

AntiCausalSample sample_anti_causal_env(const AntiCausalConfig& config, const EnvSpec& env,
                                        std::uint64_t seed) {
  config.validate();
  const int k = config.components();
  if (env.weights.size() != k) throw ConfigError("anti-causal: mixture weight length mismatch");
  if ((env.weights.array() < 0.0).any() || std::abs(env.weights.sum() - 1.0) > 1e-9) {
    throw ConfigError("anti-causal: mixture weights must lie on the simplex");
  }
  if (env.n < 0) throw ConfigError("anti-causal: negative sample count");

  Rng rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::discrete_distribution<int> pick(env.weights.data(), env.weights.data() + k);
  const int d = config.n_phi + config.n_psi;

  AntiCausalSample out;
  out.data.X.resize(env.n, d);
  out.data.y.resize(env.n);
  out.component.resize(static_cast<std::size_t>(env.n));
  for (int i = 0; i < env.n; ++i) {
    const int comp = pick(rng);
    out.component[static_cast<std::size_t>(i)] = comp;
    Vector phi(config.n_phi);
    for (int j = 0; j < config.n_phi; ++j) phi(j) = config.means[comp](j) + std_normal(rng);
    const double y =
        invariant_response(phi, config.theta_phi, config.beta, config.noise_std * std_normal(rng));
    out.data.X.row(i).head(config.n_phi) = phi.transpose();
    for (int j = 0; j < config.n_psi; ++j) {
      out.data.X(i, config.n_phi + j) =
          config.theta_psi(j) * y + config.sigmas[comp] * std_normal(rng);
    }
    out.data.y(i) = y;
  }
  IndexVector inv(config.n_phi);
  for (int i = 0; i < config.n_phi; ++i) inv[i] = i;
  out.data.invariant_dims = std::move(inv);
  out.data.seed = seed;
  return out;
}

std::vector<Dataset> generate_anti_causal(const AntiCausalConfig& config,
                                          const std::vector<EnvSpec>& envs,
                                          std::uint64_t seed) {
  std::vector<Dataset> out;
  out.reserve(envs.size());
  for (std::size_t e = 0; e < envs.size(); ++e) {
    AntiCausalSample s = sample_anti_causal_env(config, envs[e], mix_seed(seed, kStreamEnv + e));
    s.data.env_labels = IndexVector(static_cast<std::size_t>(envs[e].n), static_cast<int>(e));
    out.push_back(std::move(s.data));
  }
  return out;
}

}  // namespace hrm::synthetic
