#pragma once

// Biased-regularization base learner.
//
// Given a task's empirical mean D and the bias hyperparameter u, the learner
// outputs W ~ Beta(c R, c (1 - R)) with R = gamma D + (1 - gamma) u. The loss
// is (w - z)^2. Data are binary, so (1/M) sum z_j^2 = D; every formula below
// that uses this identity is marked "binary data".

#include <cmath>
#include <limits>

#include "tml/environment.hpp"
#include "tml/special_math.hpp"

namespace tml {

/// Output distribution of the base learner: mean r, total concentration c.
/// r in {0, 1} denotes a point mass at r.
struct PosteriorParams {
  double r = 0.5;
  double c = 1.0;

  bool degenerate() const { return r <= 0.0 || r >= 1.0; }
  BetaParams beta() const { return BetaParams::from_mean(r, c); }
  double variance() const { return r * (1.0 - r) / (c + 1.0); }
};

inline double empirical_mean(int count, int M) { return static_cast<double>(count) / M; }
inline double empirical_mean(const TaskDataset& d) { return empirical_mean(d.count, d.size()); }

inline double blend(double d_mean, double u, double gamma) { return gamma * d_mean + (1.0 - gamma) * u; }

inline PosteriorParams posterior(double d_mean, double u, double gamma, double c) {
  return {blend(d_mean, u, gamma), c};
}
inline PosteriorParams posterior(const TaskDataset& d, double u, double gamma, double c) {
  return posterior(empirical_mean(d), u, gamma, c);
}

/// E_W[(1/M) sum_j (W - Z_j)^2] = V + R^2 - 2 R D + D (binary data).
inline double per_task_training_loss(double d_mean, double u, double gamma, double c) {
  const double r = blend(d_mean, u, gamma);
  const double v = r * (1.0 - r) / (c + 1.0);
  return v + r * r - 2.0 * r * d_mean + d_mean;
}
inline double per_task_training_loss(const TaskDataset& d, double u, double gamma, double c) {
  return per_task_training_loss(empirical_mean(d), u, gamma, c);
}

/// Per-task test loss for a known task mean tau: E_W E_{Z~Bern(tau)}[(W - Z)^2].
inline double per_task_generalization_loss(double d_mean, double tau, double u, double gamma, double c) {
  const double r = blend(d_mean, u, gamma);
  const double v = r * (1.0 - r) / (c + 1.0);
  return v + r * r - 2.0 * r * tau + tau;
}

/// KL(P_{W|Z,u} || Q_{W|u}) with prior Q_{W|u} = Beta(c u, c (1 - u)).
/// Returns +infinity when the prior is degenerate (u at an endpoint).
inline double posterior_prior_kl(double d_mean, double u, double gamma, double c) {
  if (!(u > 0.0 && u < 1.0)) return std::numeric_limits<double>::infinity();
  const double r = blend(d_mean, u, gamma);
  if (r <= 0.0 || r >= 1.0) return std::numeric_limits<double>::infinity();
  if (r == u) return 0.0;
  return kl_beta_beta(BetaParams::from_mean(r, c), BetaParams::from_mean(u, c));
}
inline double posterior_prior_kl(const TaskDataset& d, double u, double gamma, double c) {
  return posterior_prior_kl(empirical_mean(d), u, gamma, c);
}

/// One model-parameter draw from the base learner.
inline double sample_model(const PosteriorParams& p, Rng& rng) {
  if (p.degenerate()) return p.r <= 0.0 ? 0.0 : 1.0;
  return sample_beta(p.beta(), rng);
}

}  // namespace tml
