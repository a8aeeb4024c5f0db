#pragma once

// Meta-level losses: the weighted meta-training loss, the closed-form transfer
// meta-generalization loss, its Monte-Carlo estimator, and excess risk.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tml/base_learner.hpp"
#include "tml/environment.hpp"
#include "tml/hyper_grid.hpp"

namespace tml {

struct LossBreakdown {
  double source_term = 0.0;
  double target_term = 0.0;
  double total = 0.0;
};

/// Weighted meta-training loss of hyperparameter u on a count view.
inline LossBreakdown meta_training_loss(double u, const CountView& data) {
  const auto& cfg = data.config;
  const int n = static_cast<int>(data.counts.size());
  const int n_src = data.n_src;
  LossBreakdown out;
  for (int i = 0; i < n_src; ++i) {
    out.source_term += per_task_training_loss(empirical_mean(data.counts[i], data.M), u, cfg.gamma, cfg.c);
  }
  out.source_term /= n_src;
  if (cfg.single_block()) {
    out.total = out.source_term;
    return out;
  }
  if (n - n_src < 1) throw std::invalid_argument("meta_training_loss: target block is empty");
  for (int i = n_src; i < n; ++i) {
    out.target_term += per_task_training_loss(empirical_mean(data.counts[i], data.M), u, cfg.gamma, cfg.c);
  }
  out.target_term /= (n - n_src);
  out.total = cfg.alpha_weight * out.source_term + (1.0 - cfg.alpha_weight) * out.target_term;
  return out;
}

inline LossBreakdown meta_training_loss(double u, const MetaDataset& data) {
  return meta_training_loss(u, CountView::of(data));
}

/// Closed-form transfer meta-generalization loss of u (target environment).
inline double transfer_gen_loss(double u, const EnvironmentConfig& env, double gamma, double c, int M) {
  const auto [rt, vt] = beta_mean_var(env.target);
  const double second = vt + rt * rt;  // E[tau^2]
  const double k = c / (c + 1.0);
  const double ug = u * (1.0 - gamma);
  return ug * (1.0 / (c + 1.0) + ug * k + 2.0 * gamma * rt * k - 2.0 * rt) + gamma * rt / (c + 1.0) +
         gamma * gamma * k * (rt / M + second * (1.0 - 1.0 / M)) - 2.0 * gamma * second + rt;
}

struct McEstimate {
  double estimate;
  double std_err;
};

/// Definitional Monte-Carlo estimate of the transfer meta-generalization loss:
/// tau ~ P'_T, Z^M ~ Bern(tau)^M, W ~ base learner, Z ~ Bern(tau), loss (W - Z)^2.
inline McEstimate mc_transfer_gen_loss(double u, const EnvironmentConfig& env, double gamma, double c, int M,
                                       long n_samples, Rng& rng) {
  if (n_samples < 1) throw std::invalid_argument("mc_transfer_gen_loss: n_samples must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (long s = 0; s < n_samples; ++s) {
    const double tau = sample_beta(env.target, rng);
    int count = 0;
    for (int j = 0; j < M; ++j) count += rng.bernoulli(tau) ? 1 : 0;
    const double w = sample_model(posterior(empirical_mean(count, M), u, gamma, c), rng);
    const double z = rng.bernoulli(tau) ? 1.0 : 0.0;
    const double loss = (w - z) * (w - z);
    sum += loss;
    sum_sq += loss * loss;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

/// u* = argmin_u of the transfer meta-generalization loss on the grid (refined).
inline Minimum optimal_hyperparameter(const EnvironmentConfig& env, double gamma, double c, int M,
                                      const HyperGrid& grid) {
  return grid_minimize([&](double u) { return transfer_gen_loss(u, env, gamma, c, M); }, grid);
}

inline double transfer_excess_risk(double u, const EnvironmentConfig& env, double gamma, double c, int M,
                                   const HyperGrid& grid) {
  return transfer_gen_loss(u, env, gamma, c, M) - optimal_hyperparameter(env, gamma, c, M, grid).value;
}

}  // namespace tml
