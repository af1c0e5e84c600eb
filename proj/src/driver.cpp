#include "hrm/driver.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace hrm::driver {

void HrmConfig::validate() const {
  if (rounds < 1) throw ConfigError("hrm: rounds must be >= 1");
  if (convert == ConvertMode::HardThreshold && !(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("hrm: tau must lie in (0,1)");
  }
  if (!(stop_tol >= 0.0)) throw ConfigError("hrm: stop_tol must be >= 0");
  mc.validate();
  mp.validate();
}

LinearModel HrmState::predictor() const { return gates::effective_model(gate, model); }

Vector convert_selector(const Vector& mask, const HrmConfig& config) {
  if (config.convert == ConvertMode::HardThreshold) {
    return (mask.array() > config.tau).select(Vector::Zero(mask.size()), 1.0);
  }
  return Vector::Ones(mask.size()) - mask;
}

namespace {

std::vector<Environment> learner_environments(const Dataset& data,
                                              const clustering::EnvironmentPartition& partition,
                                              const HrmConfig& config, std::uint64_t seed) {
  std::vector<Environment> envs;
  if (config.stochastic_assignment) {
    envs = environments_from_labels(data, clustering::sample_labels(partition.W, seed));
  } else {
    const double floor = config.mc.min_responsibility * static_cast<double>(data.rows());
    for (auto& env : environments_from_weights(data, partition.W)) {
      if (env.total_weight() > std::max(floor, 1e-12)) envs.push_back(std::move(env));
    }
  }
  // A single surviving environment carries no heterogeneity; duplicating it
  // zeroes the penalty and leaves a plain gated risk fit.
  if (envs.size() < 2) envs = {Environment{data.X, data.y, {}}, Environment{data.X, data.y, {}}};
  return envs;
}

clustering::McResult cluster(const Dataset& data, const Vector& selector,
                             const clustering::McConfig& mc) {
  try {
    return clustering::fit_mc(data.X, data.y, selector, mc);
  } catch (const ConfigError&) {
    if ((selector.array() > 0.0).any()) throw;
    return clustering::fit_mc(data.X, data.y, Vector::Ones(data.dim()), mc);
  }
}

}  // namespace

HrmState run_hrm(const Dataset& data, const HrmConfig& config) {
  config.validate();
  data.validate();
  HrmState state;
  Vector selector = Vector::Ones(data.dim());
  std::optional<std::pair<gates::GateVector, LinearModel>> warm;

  for (int round = 0; round < config.rounds; ++round) {
    const auto r = static_cast<std::uint64_t>(round);
    clustering::McConfig mc = config.mc;
    mc.seed = mix_seed(config.mc.seed, r);
    gates::MpConfig mp = config.mp;
    mp.seed = mix_seed(config.mp.seed, r);

    clustering::McResult clusters;
    gates::MpResult fit;
    try {
      clusters = cluster(data, selector, mc);
      const auto envs = learner_environments(data, clusters.partition, config, mix_seed(mc.seed, 99));
      fit = gates::fit_mp(envs, mp, config.warm_start ? warm : std::nullopt);
    } catch (const ConfigError& e) {
      throw ConfigError("hrm round " + std::to_string(round) + ": " + e.what());
    } catch (const TrainingError& e) {
      throw TrainingError("hrm round " + std::to_string(round) + ": " + e.what());
    }

    RoundRecord rec;
    rec.mask = gates::hard_mask(fit.gate);
    rec.mp_objective = fit.trace.empty() ? 0.0 : fit.trace.back();
    rec.mc_objective = clusters.trace.back();
    rec.hard_labels = clusters.partition.hard_labels;
    if (data.env_labels) rec.agreement = partition_agreement(rec.hard_labels, *data.env_labels);

    const bool settled =
        !state.history.empty() &&
        (rec.mask - state.history.back().mask).cwiseAbs().maxCoeff() < config.stop_tol;

    state.gate = fit.gate;
    state.model = fit.model;
    state.partition = std::move(clusters.partition);
    state.history.push_back(std::move(rec));
    state.round = round + 1;
    warm = std::make_pair(fit.gate, fit.model);
    selector = convert_selector(state.history.back().mask, config);
    if (settled) break;
  }
  return state;
}

HrmState run_hrm_single(const Dataset& data, HrmConfig config) {
  config.rounds = 1;
  return run_hrm(data, config);
}

double partition_agreement(const IndexVector& predicted, const IndexVector& truth) {
  if (predicted.size() != truth.size()) {
    throw ConfigError("partition_agreement: label vectors differ in length");
  }
  if (predicted.empty()) return 1.0;
  auto index_of = [](const IndexVector& v) {
    IndexVector keys(v);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
  };
  const IndexVector pk = index_of(predicted);
  const IndexVector tk = index_of(truth);
  const std::size_t L = std::max(pk.size(), tk.size());
  std::vector<std::vector<long>> confusion(L, std::vector<long>(L, 0));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto p = std::lower_bound(pk.begin(), pk.end(), predicted[i]) - pk.begin();
    const auto t = std::lower_bound(tk.begin(), tk.end(), truth[i]) - tk.begin();
    ++confusion[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
  }
  std::vector<std::size_t> perm(L);
  std::iota(perm.begin(), perm.end(), 0);
  long best = 0;
  if (L <= 8) {
    do {
      long hit = 0;
      for (std::size_t p = 0; p < L; ++p) hit += confusion[p][perm[p]];
      best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    // Greedy matching on the largest confusion cells.
    std::vector<bool> used_p(L), used_t(L);
    for (std::size_t step = 0; step < L; ++step) {
      long cell = -1;
      std::size_t bp = 0, bt = 0;
      for (std::size_t p = 0; p < L; ++p) {
        for (std::size_t t = 0; t < L; ++t) {
          if (!used_p[p] && !used_t[t] && confusion[p][t] > cell) {
            cell = confusion[p][t];
            bp = p;
            bt = t;
          }
        }
      }
      used_p[bp] = used_t[bt] = true;
      best += cell;
    }
  }
  return static_cast<double>(best) / static_cast<double>(predicted.size());
}

}  // namespace hrm::driver
