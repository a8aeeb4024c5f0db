#pragma once

// Source/target task environments and meta-training data generation.
//
// Tasks are Bernoulli(tau) data sources with tau drawn from a Beta task
// distribution. The first n_src tasks of a meta-dataset come from the source
// environment, the rest from the target environment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "tml/errors.hpp"
#include "tml/special_math.hpp"

namespace tml {

struct EnvironmentConfig {
  BetaParams source{1.5, 7.5};
  BetaParams target{4.0, 5.0};

  bool matched() const { return source == target; }
};

/// Meta-training setup. n_src is derived from (N, beta_frac); see source_tasks().
struct MetaTrainConfig {
  int N = 8;
  int M = 10;
  double beta_frac = 0.6;
  double alpha_weight = 0.1;
  double gamma = 0.55;
  double c = 5.0;

  /// clamp(round(beta N), 1, N - 1) for beta < 1; N for beta = 1.
  int source_tasks() const {
    if (beta_frac >= 1.0) return N;
    const int rounded = static_cast<int>(std::lround(beta_frac * N));
    return std::clamp(rounded, 1, N - 1);
  }
  int target_tasks() const { return N - source_tasks(); }
  bool single_block() const { return beta_frac >= 1.0; }

  /// Throws ConfigError when an invariant is violated.
  void validate() const {
    if (N < 1) throw ConfigError("train.N must be >= 1");
    if (M < 1) throw ConfigError("train.M must be >= 1");
    if (!(beta_frac > 0.0 && beta_frac <= 1.0)) throw ConfigError("train.beta_frac must lie in (0, 1]");
    if (!(alpha_weight >= 0.0 && alpha_weight <= 1.0)) {
      throw ConfigError("train.alpha_weight must lie in [0, 1]");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma must lie in [0, 1]");
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("train.c must be finite and > 0");
    if (beta_frac < 1.0 && N < 2) throw ConfigError("beta_frac < 1 needs N >= 2 (both environments nonempty)");
    if (beta_frac >= 1.0 && alpha_weight != 1.0) throw ConfigError("beta_frac = 1 requires alpha_weight = 1");
  }
};

/// One task's binary training set. task_mean is simulator-side oracle data.
struct TaskDataset {
  std::vector<std::uint8_t> samples;
  int count = 0;
  double task_mean = 0.5;
  bool from_source = true;

  int size() const { return static_cast<int>(samples.size()); }
};

struct MetaDataset {
  std::vector<TaskDataset> tasks;
  MetaTrainConfig config;

  int source_tasks() const { return config.source_tasks(); }
};

/// Count-only view of a meta-dataset: everything a meta-learner may see.
/// Hidden task means never enter this view.
struct CountView {
  std::vector<int> counts;
  int M = 1;
  int n_src = 1;
  MetaTrainConfig config;

  static CountView of(const MetaDataset& data) {
    CountView v;
    v.counts.reserve(data.tasks.size());
    for (const auto& t : data.tasks) v.counts.push_back(t.count);
    v.M = data.config.M;
    v.n_src = data.config.source_tasks();
    v.config = data.config;
    return v;
  }
};

inline TaskDataset sample_task(double tau, int M, bool from_source, Rng& rng) {
  TaskDataset t;
  t.samples.resize(static_cast<std::size_t>(M));
  t.task_mean = tau;
  t.from_source = from_source;
  for (auto& s : t.samples) {
    s = rng.bernoulli(tau) ? 1 : 0;
    t.count += s;
  }
  return t;
}

inline MetaDataset sample_meta_dataset(const EnvironmentConfig& env, const MetaTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  MetaDataset data;
  data.config = cfg;
  const int n_src = cfg.source_tasks();
  data.tasks.reserve(static_cast<std::size_t>(cfg.N));
  for (int i = 0; i < cfg.N; ++i) {
    const bool src = i < n_src;
    const double tau = sample_beta(src ? env.source : env.target, rng);
    data.tasks.push_back(sample_task(tau, cfg.M, src, rng));
  }
  return data;
}

/// log P(z^M) for one binary sequence with `count` ones under the Beta-Bernoulli marginal.
inline double sequence_log_marginal(int count, int M, const BetaParams& p) {
  if (count < 0 || count > M) throw std::domain_error("sequence_log_marginal: count out of range");
  return log_beta_fn(p.a + count, p.b + (M - count)) - log_beta_fn(p.a, p.b);
}

/// log of the Beta-Binomial pmf of the count statistic.
inline double count_log_pmf(int count, int M, const BetaParams& p) {
  return log_binomial(M, count) + sequence_log_marginal(count, M, p);
}

/// D(P_{Z^M} || P'_{Z^M}) between source and target data marginals, exact.
inline double kl_data_marginals(int M, const EnvironmentConfig& env) {
  if (M < 1) throw std::domain_error("kl_data_marginals: M must be >= 1");
  if (env.matched()) return 0.0;
  double kl = 0.0;
  for (int k = 0; k <= M; ++k) {
    const double ls = sequence_log_marginal(k, M, env.source);
    const double lt = sequence_log_marginal(k, M, env.target);
    kl += std::exp(log_binomial(M, k) + ls) * (ls - lt);
  }
  return kl < 0.0 ? 0.0 : kl;
}

/// log P_T(tau) - log P'_T(tau).
inline double task_log_likelihood_ratio(double tau, const EnvironmentConfig& env) {
  if (env.matched()) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("task_log_likelihood_ratio: tau must be interior");
    return 0.0;
  }
  return beta_log_pdf(tau, env.source) - beta_log_pdf(tau, env.target);
}

}  // namespace tml
