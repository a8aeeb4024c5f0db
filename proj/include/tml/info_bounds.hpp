#pragma once

// Information-theoretic and PAC-Bayesian bounds on the transfer
// meta-generalization gap, and the estimators that feed them.
//
// Average bounds (MI based) need I(U; Z^M_i) and I(W; Z_j | T = tau). Both are
// estimated by simulation, which is possible because the simulator knows the
// task environments:
//   * I(U; Z^M_i) = I(U; K_i) with K_i the count of task i, since every learner
//     here sees the data only through counts. Plug-in estimate on a histogram
//     of (binned U, K_i); the Miller-Madow corrected value is reported too.
//   * I(W; Z_j | tau) by Monte Carlo over the information density, using the
//     exact Binomial mixtures p(w | Z_j, tau, u) and p(w | tau, u).
// High-probability bounds (PAC-Bayes, single draw) read the realized task
// means of the meta-training set; that is oracle access by the simulator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tml/base_learner.hpp"
#include "tml/environment.hpp"
#include "tml/errors.hpp"
#include "tml/meta_learners.hpp"
#include "tml/meta_objectives.hpp"
#include "tml/parallel.hpp"
#include "tml/special_math.hpp"

namespace tml {

/// Sub-Gaussian variance proxies; 1/4 for a loss bounded in [0, 1].
struct SubGaussianConsts {
  double sigma_sq = 0.25;
  double delta_sq = 0.25;
};

struct MIEstimate {
  double value = 0.0;  ///< plug-in, nats, clipped at 0
  double miller_madow = 0.0;
  double std_err = 0.0;  ///< Monte-Carlo estimators only
  int n_replicates = 0;
  int n_bins = 0;
};

struct BoundReport {
  std::string name;
  double env_shift_term = 0.0;
  double env_sensitivity_term = 0.0;
  double within_task_term = 0.0;
  std::vector<std::pair<std::string, double>> extra_terms;
  double total = 0.0;
  double delta = 0.0;  ///< confidence parameter, 0 for average bounds
  bool clamped = false;  ///< a negative radicand was clamped to 0
  /// Intermediate quantities, not part of the total.
  std::vector<std::pair<std::string, double>> diagnostics;

  double extra_sum() const {
    double s = 0.0;
    for (const auto& [name, v] : extra_terms) s += v;
    return s;
  }
  void finalize() {
    total = env_shift_term + env_sensitivity_term + within_task_term + extra_sum();
    if (!std::isfinite(total)) throw NumericError("bound '" + name + "' is not finite");
  }
};

/// Simulation budget for the MI-based bounds.
struct MiBudget {
  int hyper_replicates = 4000;  ///< meta-datasets for I(U; Z^M_i)
  int bins = 40;                ///< equal-width U bins on [0, 1]
  int target_tasks = 50;        ///< tau ~ P'_T draws for the within-task term
  int model_replicates = 1000;  ///< Monte-Carlo draws per tau for I(W; Z_j | tau)
  int threads = 1;
};

// ---------------------------------------------------------------------------
// I(U; Z^M_i)

/// Output of a meta-learner on independent meta-datasets, with the counts it saw.
struct HyperDraws {
  std::vector<double> u;
  std::vector<std::vector<int>> counts;  ///< [replicate][task]
};

inline HyperDraws draw_hyperparameters(const MetaLearner& learner, const EnvironmentConfig& env,
                                       const MetaTrainConfig& cfg, int n_replicates, std::uint64_t master,
                                       int threads = 1) {
  cfg.validate();
  struct One {
    double u = 0.0;
    std::vector<int> counts;
  };
  auto rows = parallel_map<One>(static_cast<std::size_t>(n_replicates), threads, [&](std::size_t r) {
    Rng rng = Rng::stream(master, r);
    const auto data = sample_meta_dataset(env, cfg, rng);
    const auto view = CountView::of(data);
    return One{learner(view, rng), view.counts};
  });
  HyperDraws out;
  out.u.reserve(rows.size());
  out.counts.reserve(rows.size());
  for (auto& row : rows) {
    out.u.push_back(row.u);
    out.counts.push_back(std::move(row.counts));
  }
  return out;
}

inline int u_bin(double u, int n_bins) {
  return std::clamp(static_cast<int>(std::floor(u * n_bins)), 0, n_bins - 1);
}

/// Plug-in MI of the empirical joint of (bin(U), K) with K in 0..M.
inline MIEstimate plug_in_mi(const std::vector<double>& u, const std::vector<int>& k, int M, int n_bins) {
  const std::size_t n = u.size();
  const auto kb = static_cast<std::size_t>(M + 1);
  std::vector<double> joint(static_cast<std::size_t>(n_bins) * kb, 0.0), pu(static_cast<std::size_t>(n_bins), 0.0),
      pk(kb, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto b = static_cast<std::size_t>(u_bin(u[r], n_bins));
    const auto c = static_cast<std::size_t>(k[r]);
    joint[b * kb + c] += 1.0;
    pu[b] += 1.0;
    pk[c] += 1.0;
  }
  const double nn = static_cast<double>(n);
  double mi = 0.0;
  int nz_joint = 0, nz_u = 0, nz_k = 0;
  for (std::size_t b = 0; b < pu.size(); ++b) {
    if (pu[b] > 0) ++nz_u;
    for (std::size_t c = 0; c < kb; ++c) {
      const double j = joint[b * kb + c];
      if (j <= 0) continue;
      ++nz_joint;
      mi += (j / nn) * std::log(j * nn / (pu[b] * pk[c]));
    }
  }
  for (double v : pk) nz_k += v > 0 ? 1 : 0;
  MIEstimate est;
  est.value = std::max(0.0, mi);
  // Miller-Madow: each entropy gains (bins_nonzero - 1) / (2n).
  est.miller_madow = std::max(0.0, mi + ((nz_u - 1) + (nz_k - 1) - (nz_joint - 1)) / (2.0 * nn));
  est.n_replicates = static_cast<int>(n);
  est.n_bins = n_bins;
  return est;
}

/// How I(U; Z^M_i) estimates share replicates across task indices.
enum class MiPooling {
  /// One histogram per block over the (U, K_i) pairs of all its tasks. Valid
  /// when the learner treats the tasks of a block symmetrically (EMRM, IMRM):
  /// then I(U; Z^M_i) is constant over the block, and pooling lowers both the
  /// variance and the bias of the plug-in estimate.
  block,
  /// One histogram per task index; no symmetry assumed.
  per_task,
};

/// I(U; Z^M_i) for every task index from one set of simulated meta-datasets.
inline std::vector<MIEstimate> mi_hyper_tasks(const HyperDraws& draws, int M, int n_bins, int n_src,
                                              MiPooling pooling = MiPooling::block) {
  if (draws.u.size() < 100) throw ConfigError("MI estimation needs at least 100 replicates");
  const std::size_t n_tasks = draws.counts.empty() ? 0 : draws.counts.front().size();
  const auto split = std::min(static_cast<std::size_t>(std::max(n_src, 0)), n_tasks);
  auto block = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> u;
    std::vector<int> k;
    u.reserve(draws.u.size() * (hi - lo));
    k.reserve(u.capacity());
    for (std::size_t r = 0; r < draws.u.size(); ++r) {
      for (std::size_t i = lo; i < hi; ++i) {
        u.push_back(draws.u[r]);
        k.push_back(draws.counts[r][i]);
      }
    }
    MIEstimate est = plug_in_mi(u, k, M, n_bins);
    est.n_replicates = static_cast<int>(draws.u.size());
    return est;
  };
  std::vector<MIEstimate> out(n_tasks);
  if (pooling == MiPooling::per_task) {
    for (std::size_t i = 0; i < n_tasks; ++i) out[i] = block(i, i + 1);
    return out;
  }
  if (split > 0) std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(split), block(0, split));
  if (split < n_tasks) std::fill(out.begin() + static_cast<std::ptrdiff_t>(split), out.end(), block(split, n_tasks));
  return out;
}

/// Plug-in estimate of I(U; Z^M_i) for one task index.
inline MIEstimate mi_hyper_task(const MetaLearner& learner, const EnvironmentConfig& env, const MetaTrainConfig& cfg,
                                int i, int n_replicates, int n_bins, Rng& rng, int threads = 1,
                                MiPooling pooling = MiPooling::block) {
  if (n_replicates < 100) throw ConfigError("MI estimation needs at least 100 replicates");
  if (i < 0 || i >= cfg.N) throw ConfigError("task index out of range");
  const auto draws = draw_hyperparameters(learner, env, cfg, n_replicates, rng(), threads);
  return mi_hyper_tasks(draws, cfg.M, n_bins, cfg.source_tasks(), pooling)[static_cast<std::size_t>(i)];
}

// ---------------------------------------------------------------------------
// I(W; Z_j | T = tau)

namespace detail {

// Log density of the base-learner output at w for each count 0..M. Point
// masses (R in {0, 1}) are handled on a separate atom scale: if w is an atom
// value only atoms contribute, otherwise only continuous components do.
struct ComponentLogDensities {
  std::vector<double> lp;
  bool atom = false;

  ComponentLogDensities(double w, double u, int M, double gamma, double c) : lp(static_cast<std::size_t>(M + 1)) {
    atom = (w <= 0.0 || w >= 1.0);
    for (int k = 0; k <= M; ++k) {
      const double r = blend(empirical_mean(k, M), u, gamma);
      const bool point = r <= 0.0 || r >= 1.0;
      double v = -std::numeric_limits<double>::infinity();
      if (atom) {
        if (point && r == w) v = 0.0;
      } else if (!point) {
        v = beta_log_pdf(w, BetaParams::from_mean(r, c));
      }
      lp[static_cast<std::size_t>(k)] = v;
    }
  }
};

inline std::vector<double> binomial_log_pmf(int n, double tau) {
  std::vector<double> out(static_cast<std::size_t>(n + 1));
  const double lt = std::log(tau), l1t = std::log1p(-tau);
  for (int k = 0; k <= n; ++k) out[static_cast<std::size_t>(k)] = log_binomial(n, k) + k * lt + (n - k) * l1t;
  return out;
}

}  // namespace detail

/// Source of the hyperparameter used by the base learner on the meta-test task:
/// a fixed u, or an empirical sample of the meta-learner's marginal P_U.
struct HyperSource {
  std::vector<double> values;

  static HyperSource fixed(double u) { return {{u}}; }
  static HyperSource marginal(std::vector<double> draws) { return {std::move(draws)}; }

  double draw(Rng& rng) const {
    if (values.size() == 1) return values.front();
    const auto idx = static_cast<std::size_t>(rng.uniform() * static_cast<double>(values.size()));
    return values[std::min(idx, values.size() - 1)];
  }
};

/// Monte-Carlo estimate of I(W; Z_j | T = tau) for every j = 0..M-1 from one
/// set of replicates. When U is random it is redrawn per replicate and the
/// mixtures are conditioned on it, which estimates I(W; Z_j | tau, U); since U
/// is independent of the meta-test data this upper-bounds I(W; Z_j | tau).
inline std::vector<MIEstimate> mi_model_samples(const HyperSource& source, double tau, const MetaTrainConfig& cfg,
                                                int n_replicates, Rng& rng) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("mi_model_samples: tau must be interior");
  if (n_replicates < 1) throw ConfigError("mi_model_samples: need at least one replicate");
  const int M = cfg.M;
  std::vector<MIEstimate> out(static_cast<std::size_t>(M));
  for (auto& e : out) e.n_replicates = n_replicates;
  // gamma = 0: every mixture component is identical, W is independent of the data.
  if (cfg.gamma == 0.0) return out;

  const auto log_w_all = detail::binomial_log_pmf(M, tau);
  const auto log_w_rest = detail::binomial_log_pmf(M - 1, tau);
  std::vector<double> sum(static_cast<std::size_t>(M), 0.0), sum_sq(static_cast<std::size_t>(M), 0.0);
  std::vector<std::uint8_t> z(static_cast<std::size_t>(M));
  for (int r = 0; r < n_replicates; ++r) {
    const double u = source.draw(rng);
    int count = 0;
    for (auto& zj : z) {
      zj = rng.bernoulli(tau) ? 1 : 0;
      count += zj;
    }
    const double w = sample_model(posterior(empirical_mean(count, M), u, cfg.gamma, cfg.c), rng);
    const detail::ComponentLogDensities comp(w, u, M, cfg.gamma, cfg.c);
    double log_marg = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= M; ++k) log_marg = log_add_exp(log_marg, log_w_all[k] + comp.lp[k]);
    double log_cond[2];
    for (int zv = 0; zv < 2; ++zv) {
      double acc = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < M; ++k) acc = log_add_exp(acc, log_w_rest[k] + comp.lp[k + zv]);
      log_cond[zv] = acc;
    }
    for (int j = 0; j < M; ++j) {
      const double dens = log_cond[z[j]] - log_marg;
      sum[j] += dens;
      sum_sq[j] += dens * dens;
    }
  }
  const double n = n_replicates;
  for (int j = 0; j < M; ++j) {
    const double mean = sum[j] / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq[j] - n * mean * mean) / (n - 1)) : 0.0;
    out[j].value = std::max(0.0, mean);
    out[j].miller_madow = out[j].value;
    out[j].std_err = std::sqrt(var / n);
  }
  return out;
}

/// Single-index version of mi_model_samples.
inline MIEstimate mi_model_sample(const HyperSource& source, double tau, const MetaTrainConfig& cfg, int j,
                                  int n_replicates, Rng& rng) {
  if (j < 0 || j >= cfg.M) throw ConfigError("sample index out of range");
  return mi_model_samples(source, tau, cfg, n_replicates, rng)[static_cast<std::size_t>(j)];
}

/// E_{tau ~ P'_T}[(1/M) sum_j sqrt(2 delta^2 I(W; Z_j | tau))] over the given task means.
inline double within_task_term(const HyperSource& source, const std::vector<double>& taus, const MetaTrainConfig& cfg,
                               const SubGaussianConsts& consts, int n_replicates, std::uint64_t master, int threads,
                               double* mean_mi = nullptr) {
  struct PerTau {
    double term = 0.0;
    double mi = 0.0;
  };
  const auto rows = parallel_map<PerTau>(taus.size(), threads, [&](std::size_t t) {
    Rng rng = Rng::stream(master, t);
    const auto est = mi_model_samples(source, taus[t], cfg, n_replicates, rng);
    PerTau p;
    for (const auto& e : est) {
      p.term += std::sqrt(2.0 * consts.delta_sq * e.value);
      p.mi += e.value;
    }
    p.term /= cfg.M;
    p.mi /= cfg.M;
    return p;
  });
  std::vector<double> terms, mis;
  for (const auto& r : rows) {
    terms.push_back(r.term);
    mis.push_back(r.mi);
  }
  if (mean_mi) *mean_mi = pairwise_sum(mis) / static_cast<double>(mis.size());
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

inline std::vector<double> sample_target_tasks(const EnvironmentConfig& env, int n, std::uint64_t master) {
  Rng rng = Rng::stream(master, 0x7a75);
  std::vector<double> taus(static_cast<std::size_t>(n));
  for (auto& t : taus) t = sample_beta(env.target, rng);
  return taus;
}

// ---------------------------------------------------------------------------
// Average-gap bound (any meta-learner) and excess-risk bound (EMRM)

namespace detail {

struct AverageBoundParts {
  BoundReport report;
  HyperDraws draws;
  std::vector<double> taus;
  std::uint64_t master = 0;
};

inline AverageBoundParts average_gap_parts(const EnvironmentConfig& env, const MetaTrainConfig& cfg,
                                           const MetaLearner& learner, const SubGaussianConsts& consts,
                                           const MiBudget& budget, Rng& rng) {
  cfg.validate();
  AverageBoundParts parts;
  parts.master = rng();
  auto& rep = parts.report;
  rep.name = "thm1_average_gap";
  const double kl = kl_data_marginals(cfg.M, env);
  parts.draws = draw_hyperparameters(learner, env, cfg, budget.hyper_replicates, derive_seed(parts.master, 1),
                                     budget.threads);
  const auto mi = mi_hyper_tasks(parts.draws, cfg.M, budget.bins, cfg.source_tasks());
  const int n_src = cfg.source_tasks();
  const int n_tgt = cfg.N - n_src;
  double src = 0.0, tgt = 0.0, mi_src = 0.0, mi_tgt = 0.0;
  for (int i = 0; i < n_src; ++i) {
    src += std::sqrt(2.0 * consts.sigma_sq * (kl + mi[i].value));
    mi_src += mi[i].value;
  }
  for (int i = n_src; i < cfg.N; ++i) {
    tgt += std::sqrt(2.0 * consts.sigma_sq * mi[i].value);
    mi_tgt += mi[i].value;
  }
  const double alpha = cfg.alpha_weight;
  rep.env_shift_term = alpha * src / n_src;
  rep.env_sensitivity_term = n_tgt > 0 ? (1.0 - alpha) * tgt / n_tgt : 0.0;

  parts.taus = sample_target_tasks(env, budget.target_tasks, derive_seed(parts.master, 2));
  double within_mi = 0.0;
  rep.within_task_term = within_task_term(HyperSource::marginal(parts.draws.u), parts.taus, cfg, consts,
                                          budget.model_replicates, derive_seed(parts.master, 3), budget.threads,
                                          &within_mi);
  rep.diagnostics = {{"kl_data_marginals", kl},
                     {"mean_mi_hyper_source", mi_src / n_src},
                     {"mean_mi_hyper_target", n_tgt > 0 ? mi_tgt / n_tgt : 0.0},
                     {"mean_mi_model_sample", within_mi}};
  rep.finalize();
  return parts;
}

}  // namespace detail

/// Average transfer meta-generalization gap bound. With beta_frac = 1 (and
/// alpha = 1) the target block vanishes, giving the source-only configuration;
/// matched environments additionally zero the KL term.
inline BoundReport avg_gap_bound_thm1(const EnvironmentConfig& env, const MetaTrainConfig& cfg,
                                      const MetaLearner& learner, const SubGaussianConsts& consts,
                                      const MiBudget& budget, Rng& rng) {
  return detail::average_gap_parts(env, cfg, learner, consts, budget, rng).report;
}

/// Average transfer excess meta-risk bound for EMRM: the average-gap bound with
/// U = EMRM, plus alpha sqrt(2 sigma^2 D) and the within-task MI at u*.
inline BoundReport excess_risk_bound_thm2(const EnvironmentConfig& env, const MetaTrainConfig& cfg,
                                          const SubGaussianConsts& consts, const HyperGrid& grid,
                                          const MiBudget& budget, Rng& rng) {
  auto parts = detail::average_gap_parts(env, cfg, emrm_learner(grid), consts, budget, rng);
  auto& rep = parts.report;
  rep.name = "thm2_excess_risk";
  const double kl = kl_data_marginals(cfg.M, env);
  const auto u_star = optimal_hyperparameter(env, cfg.gamma, cfg.c, cfg.M, grid);
  double mi_star = 0.0;
  const double within_star = within_task_term(HyperSource::fixed(u_star.u), parts.taus, cfg, consts,
                                              budget.model_replicates, derive_seed(parts.master, 4),
                                              budget.threads, &mi_star);
  rep.extra_terms = {{"shift_excess", cfg.alpha_weight * std::sqrt(2.0 * consts.sigma_sq * kl)},
                     {"within_task_u_star", within_star}};
  rep.diagnostics.emplace_back("u_star", u_star.u);
  rep.diagnostics.emplace_back("mean_mi_model_sample_u_star", mi_star);
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------
// High-probability bounds

namespace detail {

inline void require_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
}

inline double clamped_sqrt(double x, bool& clamped) {
  if (x < 0.0) {
    clamped = true;
    return 0.0;
  }
  return std::sqrt(x);
}

inline double source_log_ratio_sum(const MetaDataset& data, const EnvironmentConfig& env) {
  double s = 0.0;
  for (int i = 0; i < data.source_tasks(); ++i) s += task_log_likelihood_ratio(data.tasks[i].task_mean, env);
  return s;
}

}  // namespace detail

/// E_{P_{U|Z}}[transfer gap] = E[L'_g(U) - L_t(U | Z)] by grid quadrature.
inline double expected_transfer_gap(const GibbsPosterior& post, const MetaDataset& data, const EnvironmentConfig& env) {
  const auto view = CountView::of(data);
  const auto& cfg = data.config;
  return post.expect([&](double u) {
    return transfer_gen_loss(u, env, cfg.gamma, cfg.c, cfg.M) - meta_training_loss(u, view).total;
  });
}

/// Transfer gap for a single hyperparameter.
inline double transfer_gap(double u, const MetaDataset& data, const EnvironmentConfig& env) {
  const auto& cfg = data.config;
  return transfer_gen_loss(u, env, cfg.gamma, cfg.c, cfg.M) - meta_training_loss(u, data).total;
}

/// PAC-Bayesian bound on |E_{P_{U|Z}}[transfer gap]|, holding w.p. >= 1 - delta.
/// Terms: env_shift_term (environment level), within_task_term (source block),
/// extra "target_within_task" (target block).
inline BoundReport pac_bound_thm3(const MetaDataset& data, const GibbsPosterior& post, const EnvironmentConfig& env,
                                  const SubGaussianConsts& consts, double delta, const BetaParams& hyper_prior) {
  detail::require_delta(delta);
  const auto& cfg = data.config;
  if (cfg.single_block()) throw ConfigError("pac_bound_thm3 requires beta_frac in (0, 1)");
  const int N = cfg.N, M = cfg.M, n_src = cfg.source_tasks(), n_tgt = N - n_src;
  const double alpha = cfg.alpha_weight;
  const auto prior = prior_on_grid(hyper_prior, post.grid);
  const double hyper_kl = grid_kl(post, prior);
  const double llr = detail::source_log_ratio_sum(data, env);

  BoundReport rep;
  rep.name = "thm3_pac_bayes";
  rep.delta = delta;
  const double weight = alpha * alpha / n_src + (1.0 - alpha) * (1.0 - alpha) / n_tgt;
  rep.env_shift_term =
      detail::clamped_sqrt(2.0 * consts.sigma_sq * weight * (llr + hyper_kl + std::log(2.0 / delta)), rep.clamped);
  double src = 0.0, tgt = 0.0;
  for (int i = 0; i < N; ++i) {
    const double d = empirical_mean(data.tasks[i]);
    const double kl_i = post.expect([&](double u) { return posterior_prior_kl(d, u, cfg.gamma, cfg.c); });
    const bool is_src = i < n_src;
    const double log_term = std::log(4.0 * (is_src ? n_src : n_tgt) / delta);
    const double term =
        detail::clamped_sqrt(2.0 * consts.delta_sq / M * (hyper_kl + kl_i + log_term), rep.clamped);
    (is_src ? src : tgt) += term;
  }
  rep.within_task_term = alpha * src / n_src;
  rep.extra_terms = {{"target_within_task", (1.0 - alpha) * tgt / n_tgt}};
  rep.diagnostics = {{"hyper_kl", hyper_kl}, {"source_log_ratio_sum", llr}};
  rep.finalize();
  return rep;
}

/// E_P[L(U, Z)] + (1/N + 1/M) D(P || Q_U): the functional the IMRM posterior minimizes.
inline double imrm_free_energy(const GibbsPosterior& post, const MetaDataset& data, const BetaParams& hyper_prior) {
  const auto view = CountView::of(data);
  const auto prior = prior_on_grid(hyper_prior, post.grid);
  const double e_obj = post.expect([&](double u) { return imrm_objective(u, view); });
  return e_obj + (1.0 / data.config.N + 1.0 / data.config.M) * grid_kl(post, prior);
}

/// Looser PAC-Bayesian bound on E_{P_{U|Z}}[L'_g(U)], w.p. >= 1 - delta.
/// within_task_term = E_P[regularized training loss], env_sensitivity_term =
/// (1/N + 1/M) D(P || Q_U), env_shift_term = (1/N) sum log P_T/P'_T, and the
/// rest of the constant Psi is the extra "psi_rest".
inline BoundReport pac_bound_loose_cor4(const MetaDataset& data, const GibbsPosterior& post,
                                        const EnvironmentConfig& env, const SubGaussianConsts& consts, double delta,
                                        const BetaParams& hyper_prior) {
  detail::require_delta(delta);
  const auto& cfg = data.config;
  if (cfg.single_block()) throw ConfigError("pac_bound_loose_cor4 requires beta_frac in (0, 1)");
  const int N = cfg.N, M = cfg.M, n_src = cfg.source_tasks(), n_tgt = N - n_src;
  const double alpha = cfg.alpha_weight;
  const double beta_eff = static_cast<double>(n_src) / N;
  const auto view = CountView::of(data);
  const auto prior = prior_on_grid(hyper_prior, post.grid);
  const double hyper_kl = grid_kl(post, prior);
  const double llr = detail::source_log_ratio_sum(data, env);

  const double psi_rest = 0.5 * consts.sigma_sq * (alpha * alpha / beta_eff + (1.0 - alpha) * (1.0 - alpha) / (1.0 - beta_eff)) +
                          std::log(2.0 / delta) / N + alpha * 0.5 * consts.delta_sq +
                          alpha / M * std::log(4.0 * n_src / delta) + (1.0 - alpha) * 0.5 * consts.delta_sq +
                          (1.0 - alpha) / M * std::log(4.0 * n_tgt / delta);

  BoundReport rep;
  rep.name = "cor4_pac_bayes_loose";
  rep.delta = delta;
  rep.within_task_term = post.expect([&](double u) { return imrm_objective(u, view); });
  rep.env_sensitivity_term = (1.0 / N + 1.0 / M) * hyper_kl;
  rep.env_shift_term = llr / N;
  rep.extra_terms = {{"psi_rest", psi_rest}};
  rep.diagnostics = {{"psi", psi_rest + llr / N}, {"hyper_kl", hyper_kl}};
  rep.finalize();
  return rep;
}

/// Mismatched information density log P(u | Z) / Q_U(u), both on the grid.
inline double mismatched_density(double u, const GibbsPosterior& post, const GibbsPosterior& prior) {
  return posterior_log_density(post, u) - posterior_log_density(prior, u);
}

/// Single-draw bound on |transfer gap of u|, w.p. >= 1 - delta over (tasks, data, U).
/// beta_frac = 1 evaluates the matched-environment single-block form and
/// requires source = target.
inline BoundReport single_draw_bound_thm5(double u, const MetaDataset& data, const GibbsPosterior& post,
                                          const EnvironmentConfig& env, const SubGaussianConsts& consts,
                                          double delta, const BetaParams& hyper_prior) {
  detail::require_delta(delta);
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("single_draw_bound_thm5: u must be interior");
  const auto& cfg = data.config;
  const int N = cfg.N, M = cfg.M, n_src = cfg.source_tasks(), n_tgt = N - n_src;
  const auto prior = prior_on_grid(hyper_prior, post.grid);
  const double jd = mismatched_density(u, post, prior);

  BoundReport rep;
  rep.name = "thm5_single_draw";
  rep.delta = delta;
  rep.diagnostics = {{"mismatched_density", jd}};

  if (cfg.single_block()) {
    if (!env.matched()) throw ConfigError("single-block single-draw bound requires matched environments");
    rep.env_shift_term =
        detail::clamped_sqrt(2.0 * consts.sigma_sq / N * (jd + std::log(2.0 / delta)), rep.clamped);
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
      const double kl_i = posterior_prior_kl(empirical_mean(data.tasks[i]), u, cfg.gamma, cfg.c);
      acc += detail::clamped_sqrt(2.0 * consts.delta_sq / M * (kl_i + jd + std::log(2.0 * N / delta)), rep.clamped);
    }
    rep.within_task_term = acc / N;
    rep.finalize();
    return rep;
  }

  const double alpha = cfg.alpha_weight;
  const double llr = detail::source_log_ratio_sum(data, env);
  const double weight = alpha * alpha / n_src + (1.0 - alpha) * (1.0 - alpha) / n_tgt;
  rep.env_shift_term =
      detail::clamped_sqrt(2.0 * consts.sigma_sq * weight * (llr + jd + std::log(2.0 / delta)), rep.clamped);
  double src = 0.0, tgt = 0.0;
  for (int i = 0; i < N; ++i) {
    const bool is_src = i < n_src;
    const double kl_i = posterior_prior_kl(empirical_mean(data.tasks[i]), u, cfg.gamma, cfg.c);
    const double log_term = std::log(4.0 * (is_src ? n_src : n_tgt) / delta);
    (is_src ? src : tgt) +=
        detail::clamped_sqrt(2.0 * consts.delta_sq / M * (kl_i + jd + log_term), rep.clamped);
  }
  rep.within_task_term = alpha * src / n_src;
  rep.extra_terms = {{"target_within_task", (1.0 - alpha) * tgt / n_tgt}};
  rep.diagnostics.emplace_back("source_log_ratio_sum", llr);
  rep.finalize();
  return rep;
}

}  // namespace tml
