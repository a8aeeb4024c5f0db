#pragma once

// Meta-learners on the shared hyperparameter grid: EMRM (argmin of the
// weighted meta-training loss) and IMRM (Gibbs hyper-posterior
//   P(u | Z) ∝ Q_U(u) exp(-(N M / (N + M)) L(u, Z)),
// with L the meta-training loss plus the scaled base-learner KL terms), used
// either through its mode or through a single draw.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tml/base_learner.hpp"
#include "tml/environment.hpp"
#include "tml/hyper_grid.hpp"
#include "tml/meta_objectives.hpp"
#include "tml/special_math.hpp"

namespace tml {

namespace detail {

// Multiplicity of each count value 0..M in the source and target blocks.
// Losses depend on a task only through its count, so objectives are
// evaluated once per distinct count.
struct BlockHistogram {
  std::vector<int> source;
  std::vector<int> target;

  explicit BlockHistogram(const CountView& data)
      : source(static_cast<std::size_t>(data.M + 1), 0), target(static_cast<std::size_t>(data.M + 1), 0) {
    for (std::size_t i = 0; i < data.counts.size(); ++i) {
      auto& block = static_cast<int>(i) < data.n_src ? source : target;
      ++block[static_cast<std::size_t>(data.counts[i])];
    }
  }
};

}  // namespace detail

/// EMRM: grid argmin of the weighted meta-training loss, refined by golden section.
inline double emrm(const CountView& data, const HyperGrid& grid) {
  return grid_minimize([&](double u) { return meta_training_loss(u, data).total; }, grid).u;
}
inline double emrm(const MetaDataset& data, const HyperGrid& grid) { return emrm(CountView::of(data), grid); }

/// Meta-training loss regularized by the per-block averaged base-learner KL,
/// each scaled by 1 / (M * sample_scale). sample_scale > 1 treats the data as
/// if N and M were both that many times larger.
inline double imrm_objective(double u, const CountView& data, double sample_scale = 1.0) {
  const auto& cfg = data.config;
  const detail::BlockHistogram hist(data);
  const int n_src = data.n_src;
  const int n_tgt = static_cast<int>(data.counts.size()) - n_src;
  auto block_sums = [&](const std::vector<int>& mult, double& loss, double& kl) {
    loss = 0.0;
    kl = 0.0;
    for (int k = 0; k <= data.M; ++k) {
      const int m = mult[static_cast<std::size_t>(k)];
      if (m == 0) continue;
      const double d = empirical_mean(k, data.M);
      loss += m * per_task_training_loss(d, u, cfg.gamma, cfg.c);
      kl += m * posterior_prior_kl(d, u, cfg.gamma, cfg.c);
    }
  };
  double src_loss, src_kl;
  block_sums(hist.source, src_loss, src_kl);
  const double m_eff = data.M * sample_scale;
  if (cfg.single_block()) return (src_loss + src_kl / m_eff) / n_src;
  double tgt_loss, tgt_kl;
  block_sums(hist.target, tgt_loss, tgt_kl);
  const double a = cfg.alpha_weight;
  return a * (src_loss + src_kl / m_eff) / n_src + (1.0 - a) * (tgt_loss + tgt_kl / m_eff) / n_tgt;
}
inline double imrm_objective(double u, const MetaDataset& data) { return imrm_objective(u, CountView::of(data)); }

/// Hyper-posterior on a grid, normalized as a density: sum_g probs[g] * width_g = 1.
/// Point g carries mass probs[g] * width_g spread uniformly over its cell (see
/// HyperGrid::cell_lo); cdf holds the cumulative mass at the cell edges.
struct GibbsPosterior {
  HyperGrid grid;
  std::vector<double> log_weights;
  std::vector<double> probs;
  double log_normalizer = 0.0;
  std::vector<double> cdf;

  double log_prob(std::size_t g) const { return log_weights[g] - log_normalizer; }

  /// E_P[f(U)] by grid quadrature.
  template <class F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (probs[g] > 0.0) acc += probs[g] * grid.cell_width(g) * f(grid[g]);
    }
    return acc;
  }

  double variance() const {
    const double m = expect([](double u) { return u; });
    return expect([m](double u) { return (u - m) * (u - m); });
  }

  /// Quantile of the cell-uniform distribution.
  double quantile(double q) const {
    const double target = q * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    std::size_t cell = it == cdf.begin() ? 0 : static_cast<std::size_t>(it - cdf.begin()) - 1;
    cell = std::min(cell, grid.size() - 1);
    const double lo = grid.cell_lo(cell);
    const double mass = cdf[cell + 1] - cdf[cell];
    if (mass <= 0.0) return lo;
    return lo + grid.cell_width(cell) * std::clamp((target - cdf[cell]) / mass, 0.0, 1.0);
  }
};

/// Builds a normalized grid posterior from unnormalized log-weights.
inline GibbsPosterior make_grid_posterior(const HyperGrid& grid, std::vector<double> log_weights) {
  GibbsPosterior post{grid, std::move(log_weights), {}, 0.0, {}};
  const double peak = *std::max_element(post.log_weights.begin(), post.log_weights.end());
  if (!std::isfinite(peak)) throw std::domain_error("grid posterior: no finite log-weight");
  double acc = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) acc += grid.cell_width(g) * std::exp(post.log_weights[g] - peak);
  post.log_normalizer = peak + std::log(acc);
  post.probs.resize(grid.size());
  post.cdf.assign(grid.size() + 1, 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    post.probs[g] = std::exp(post.log_prob(g));
    post.cdf[g + 1] = post.cdf[g] + post.probs[g] * grid.cell_width(g);
  }
  return post;
}

/// The hyper-prior discretized on the grid exactly as a posterior would be.
inline GibbsPosterior prior_on_grid(const BetaParams& hyper_prior, const HyperGrid& grid) {
  std::vector<double> lw(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) lw[g] = beta_log_pdf(grid[g], hyper_prior);
  return make_grid_posterior(grid, std::move(lw));
}

struct GibbsOptions {
  /// Synthetic scaling s of (N, M) with the data held fixed: the inverse
  /// temperature N M / (N + M) is multiplied by s and the KL regularizer is
  /// divided by s. s = 0 returns the prior.
  double temperature_scale = 1.0;
};

inline double gibbs_inverse_temperature(int N, int M) {
  return static_cast<double>(N) * M / static_cast<double>(N + M);
}

inline GibbsPosterior imrm_posterior(const CountView& data, const BetaParams& hyper_prior, const HyperGrid& grid,
                                     GibbsOptions opts = {}) {
  const double beta_t =
      opts.temperature_scale * gibbs_inverse_temperature(static_cast<int>(data.counts.size()), data.M);
  std::vector<double> lw(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    lw[g] = beta_log_pdf(grid[g], hyper_prior);
    if (beta_t != 0.0) lw[g] -= beta_t * imrm_objective(grid[g], data, opts.temperature_scale);
  }
  return make_grid_posterior(grid, std::move(lw));
}
inline GibbsPosterior imrm_posterior(const MetaDataset& data, const BetaParams& hyper_prior, const HyperGrid& grid,
                                     GibbsOptions opts = {}) {
  return imrm_posterior(CountView::of(data), hyper_prior, grid, opts);
}

/// Grid point of maximal posterior probability, ties toward smaller u.
inline double imrm_mode(const GibbsPosterior& post) {
  std::size_t best = 0;
  for (std::size_t g = 1; g < post.probs.size(); ++g) {
    if (post.log_weights[g] > post.log_weights[best]) best = g;
  }
  return post.grid[best];
}

/// Inverse-CDF draw; the CDF is piecewise linear across each grid cell.
inline double imrm_sample(const GibbsPosterior& post, Rng& rng) { return post.quantile(rng.uniform()); }

/// log density at u: linear interpolation of log(probs) between grid points,
/// constant between the outermost points and the ends of [0, 1]. The
/// trapezoid rule over {0, grid points, 1} integrates its exponential to 1.
inline double posterior_log_density(const GibbsPosterior& post, double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("posterior_log_density: u must lie in (0, 1)");
  const auto& grid = post.grid;
  if (u <= grid.front()) return post.log_prob(0);
  if (u >= grid.back()) return post.log_prob(grid.size() - 1);
  const auto& pts = grid.points();
  const auto lo = static_cast<std::size_t>(std::upper_bound(pts.begin(), pts.end(), u) - pts.begin()) - 1;
  const double t = (u - pts[lo]) / grid.spacing();
  if (t == 0.0) return post.log_prob(lo);
  return (1.0 - t) * post.log_prob(lo) + t * post.log_prob(lo + 1);
}

/// D(P || Q) for two posteriors on the same grid.
inline double grid_kl(const GibbsPosterior& p, const GibbsPosterior& q) {
  double acc = 0.0;
  for (std::size_t g = 0; g < p.grid.size(); ++g) {
    if (p.probs[g] > 0.0) acc += p.probs[g] * p.grid.cell_width(g) * (p.log_prob(g) - q.log_prob(g));
  }
  return std::max(0.0, acc);
}

// ---------------------------------------------------------------------------
// Learner handles: a meta-learner maps the (count-only) meta-training data to
// one hyperparameter, possibly using its own random stream.

using MetaLearner = std::function<double(const CountView&, Rng&)>;

inline MetaLearner constant_learner(double u) {
  return [u](const CountView&, Rng&) { return u; };
}

inline MetaLearner emrm_learner(HyperGrid grid) {
  return [grid = std::move(grid)](const CountView& d, Rng&) { return emrm(d, grid); };
}

inline MetaLearner imrm_mode_learner(HyperGrid grid, BetaParams hyper_prior) {
  return [grid = std::move(grid), hyper_prior](const CountView& d, Rng&) {
    return imrm_mode(imrm_posterior(d, hyper_prior, grid));
  };
}

inline MetaLearner imrm_gibbs_learner(HyperGrid grid, BetaParams hyper_prior) {
  return [grid = std::move(grid), hyper_prior](const CountView& d, Rng& rng) {
    return imrm_sample(imrm_posterior(d, hyper_prior, grid), rng);
  };
}

}  // namespace tml
