#pragma once

// Experiment runners behind the CLI subcommands. Each returns a Table that the
// caller writes as CSV. Replicate r of every sweep point uses the stream
// (seed, r), so sweep points share common random numbers and output never
// depends on the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "tml/config.hpp"
#include "tml/environment.hpp"
#include "tml/errors.hpp"
#include "tml/info_bounds.hpp"
#include "tml/meta_learners.hpp"
#include "tml/meta_objectives.hpp"
#include "tml/parallel.hpp"

namespace tml {

using Cell = std::variant<double, long, std::string>;

struct Table {
  std::string command;
  std::string config_line;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::out_of_range("no column " + name);
    return static_cast<std::size_t>(it - columns.begin());
  }
  double number(std::size_t row, const std::string& name) const {
    const auto& cell = rows.at(row).at(column(name));
    if (const auto* d = std::get_if<double>(&cell)) return *d;
    if (const auto* l = std::get_if<long>(&cell)) return static_cast<double>(*l);
    throw std::invalid_argument("column " + name + " is not numeric");
  }
  std::string text(std::size_t row, const std::string& name) const {
    return std::get<std::string>(rows.at(row).at(column(name)));
  }
};

/// CSV: `# config: ...` line, header line, then rows with 12 significant digits.
inline void write_csv(const Table& t, std::ostream& os) {
  os << "# config: version=" << kVersion << " command=" << t.command << ' ' << t.config_line << '\n';
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << ',';
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) {
              if (!std::isfinite(v)) throw NumericError("non-finite value in column " + t.columns[c]);
              os << format_number(v);
            } else if constexpr (std::is_same_v<V, long>) {
              os << v;
            } else {
              os << v;
            }
          },
          row[c]);
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Defaults mirroring the published experiment setups.

inline ExperimentConfig default_config(const std::string& command) {
  ExperimentConfig c;
  c.env = {BetaParams{1.5, 7.5}, BetaParams{4.0, 5.0}};
  c.train = {8, 10, 0.6, 0.1, 0.55, 5.0};
  if (command == "fig-scaling") {
    c.train = {6, 5, 0.48, 0.48, 0.55, 5.0};
    c.sweep = {5, 10, 15, 20, 25, 30, 35, 40};
  } else if (command == "fig-shift") {
    c.train = {10, 5, 0.6, 0.6, 0.55, 5.0};
    c.sweep = {0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8};
  } else if (command == "fig-alpha") {
    c.env = {BetaParams{1.67, 8.3}, BetaParams{4.45, 5.55}};
    c.train = {23, 15, 0.4, 0.5, 0.55, 5.0};
    c.sweep = {0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  } else if (command == "fig-singledraw") {
    c.train = {10, 5, 0.25, 0.25, 0.55, 5.0};
    c.replicates = 2000;
    c.sweep = {5, 10, 15, 20, 30, 40, 60, 80};
  }
  return c;
}

namespace detail {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = pairwise_sum(x) / n;
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - mean) * (x[i] - mean);
  const double var = x.size() > 1 ? pairwise_sum(sq) / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

/// Upper-tail quantile: the value exceeded with probability q (linear interpolation).
inline double upper_quantile(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double pos = (1.0 - q) * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return (1.0 - t) * x[lo] + t * x[hi];
}

inline std::vector<int> integer_sweep(const std::vector<double>& sweep, const char* what) {
  if (sweep.empty()) throw ConfigError(std::string(what) + ": sweep list is empty");
  std::vector<int> out;
  for (double v : sweep) {
    if (v < 1 || v != std::floor(v)) throw ConfigError(std::string(what) + ": sweep values must be positive integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Hyper-prior, IMRM hyper-posterior and EMRM solution for one meta-dataset.
/// Rows are the grid points plus u = 0 and u = 1, where the piecewise density
/// keeps its end values; with these rows the trapezoid rule over each density
/// column reproduces the grid normalization exactly.
inline Table run_fig_posterior(const ExperimentConfig& cfg) {
  cfg.validate();
  const HyperGrid grid(cfg.grid_size);
  Rng rng = Rng::stream(cfg.seed, 0, 0);
  const auto data = sample_meta_dataset(cfg.env, cfg.train, rng);
  const auto post = imrm_posterior(data, cfg.hyper_prior, grid);
  const auto prior = prior_on_grid(cfg.hyper_prior, grid);
  const double u_emrm = emrm(data, grid);

  Table t{"fig-posterior", describe(cfg), {"u", "hyper_prior_density", "imrm_posterior_density", "emrm_marker"}, {}};
  const std::size_t last = grid.size() - 1;
  t.rows.push_back({0.0, prior.probs[0], post.probs[0], u_emrm});
  for (std::size_t g = 0; g < grid.size(); ++g) t.rows.push_back({grid[g], prior.probs[g], post.probs[g], u_emrm});
  t.rows.push_back({1.0, prior.probs[last], post.probs[last], u_emrm});
  return t;
}

/// Average losses of EMRM, IMRM-mode and IMRM-Gibbs as M grows with N = round(M / 0.85).
inline Table run_fig_scaling(const ExperimentConfig& cfg, int threads = 1) {
  cfg.validate();
  const auto m_values = detail::integer_sweep(cfg.sweep, "fig-scaling");
  const HyperGrid grid(cfg.grid_size);
  Table t{"fig-scaling",
          describe(cfg),
          {"M", "N", "learner", "mean_gen_loss", "mean_train_loss", "mean_gap", "se_gen_loss", "se_train_loss",
           "se_gap"},
          {}};
  for (const int M : m_values) {
    MetaTrainConfig train = cfg.train;
    train.M = M;
    train.N = static_cast<int>(std::lround(M / 0.85));
    train.validate();
    struct Rep {
      double gen[3];
      double trn[3];
    };
    const auto reps = parallel_map<Rep>(static_cast<std::size_t>(cfg.replicates), threads, [&](std::size_t r) {
      Rng rng = Rng::stream(cfg.seed, r);
      const auto data = sample_meta_dataset(cfg.env, train, rng);
      const auto view = CountView::of(data);
      auto gen = [&](double u) { return transfer_gen_loss(u, cfg.env, train.gamma, train.c, M); };
      auto trn = [&](double u) { return meta_training_loss(u, view).total; };
      Rep out{};
      const double u_e = emrm(view, grid);
      const auto post = imrm_posterior(view, cfg.hyper_prior, grid);
      const double u_m = imrm_mode(post);
      out.gen[0] = gen(u_e);
      out.trn[0] = trn(u_e);
      out.gen[1] = gen(u_m);
      out.trn[1] = trn(u_m);
      out.gen[2] = post.expect(gen);
      out.trn[2] = post.expect(trn);
      return out;
    });
    static const char* names[3] = {"emrm", "imrm_mode", "imrm_gibbs"};
    for (int l = 0; l < 3; ++l) {
      std::vector<double> g, tr, gap;
      for (const auto& rep : reps) {
        g.push_back(rep.gen[l]);
        tr.push_back(rep.trn[l]);
        gap.push_back(rep.gen[l] - rep.trn[l]);
      }
      const auto mg = detail::mean_se(g), mt = detail::mean_se(tr), mp = detail::mean_se(gap);
      t.rows.push_back({static_cast<long>(M), static_cast<long>(train.N), std::string(names[l]), mg.mean, mt.mean,
                        mp.mean, mg.se, mt.se, mp.se});
    }
  }
  return t;
}

/// Source environment Beta(9R, 9(1 - R)) against a fixed target.
inline Table run_fig_shift(const ExperimentConfig& cfg, int threads = 1) {
  cfg.validate();
  if (cfg.sweep.empty()) throw ConfigError("fig-shift: sweep list is empty");
  for (double R : cfg.sweep) {
    if (!(R > 0.0 && R < 1.0)) throw ConfigError("fig-shift: R values must lie in (0, 1)");
  }
  const HyperGrid grid(cfg.grid_size);
  Table t{"fig-shift",
          describe(cfg),
          {"R", "a", "b", "kl_marginals", "thm1_bound", "emrm_gap", "imrm_gap", "emrm_gap_se", "imrm_gap_se"},
          {}};
  for (const double R : cfg.sweep) {
    EnvironmentConfig env = cfg.env;
    const double b = 9.0 * (1.0 - R);
    env.source = BetaParams(9.0 - b, b);
    Rng bound_rng = Rng::stream(cfg.seed, 0xb0);
    const auto bound =
        avg_gap_bound_thm1(env, cfg.train, emrm_learner(grid), cfg.consts, cfg.mi_budget(threads), bound_rng);
    struct Rep {
      double emrm_gap, imrm_gap;
    };
    const auto reps = parallel_map<Rep>(static_cast<std::size_t>(cfg.replicates), threads, [&](std::size_t r) {
      Rng rng = Rng::stream(cfg.seed, r);
      const auto data = sample_meta_dataset(env, cfg.train, rng);
      const auto view = CountView::of(data);
      auto gap = [&](double u) {
        return transfer_gen_loss(u, env, cfg.train.gamma, cfg.train.c, cfg.train.M) - meta_training_loss(u, view).total;
      };
      return Rep{gap(emrm(view, grid)), gap(imrm_mode(imrm_posterior(view, cfg.hyper_prior, grid)))};
    });
    std::vector<double> ge, gi;
    for (const auto& rep : reps) {
      ge.push_back(rep.emrm_gap);
      gi.push_back(rep.imrm_gap);
    }
    const auto me = detail::mean_se(ge), mi = detail::mean_se(gi);
    t.rows.push_back({R, env.source.a, env.source.b, kl_data_marginals(cfg.train.M, env), bound.total, me.mean,
                      mi.mean, me.se, mi.se});
  }
  return t;
}

/// Excess-risk bound for EMRM and empirical excess risks as alpha varies.
inline Table run_fig_alpha(const ExperimentConfig& cfg, int threads = 1) {
  cfg.validate();
  if (cfg.sweep.empty()) throw ConfigError("fig-alpha: sweep list is empty");
  if (cfg.train.single_block()) throw ConfigError("fig-alpha requires beta_frac in (0, 1)");
  const HyperGrid grid(cfg.grid_size);
  Table t{"fig-alpha",
          describe(cfg),
          {"alpha", "thm2_bound", "emrm_excess_risk", "imrm_mode_excess_risk", "emrm_excess_risk_se",
           "imrm_mode_excess_risk_se"},
          {}};
  for (const double alpha : cfg.sweep) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fig-alpha: alpha values must lie in [0, 1]");
    MetaTrainConfig train = cfg.train;
    train.alpha_weight = alpha;
    const auto star = optimal_hyperparameter(cfg.env, train.gamma, train.c, train.M, grid);
    Rng bound_rng = Rng::stream(cfg.seed, 0xb0);
    const auto bound = excess_risk_bound_thm2(cfg.env, train, cfg.consts, grid, cfg.mi_budget(threads), bound_rng);
    struct Rep {
      double emrm_risk, imrm_risk;
    };
    const auto reps = parallel_map<Rep>(static_cast<std::size_t>(cfg.replicates), threads, [&](std::size_t r) {
      Rng rng = Rng::stream(cfg.seed, r);
      const auto data = sample_meta_dataset(cfg.env, train, rng);
      const auto view = CountView::of(data);
      auto risk = [&](double u) {
        return transfer_gen_loss(u, cfg.env, train.gamma, train.c, train.M) - star.value;
      };
      return Rep{risk(emrm(view, grid)), risk(imrm_mode(imrm_posterior(view, cfg.hyper_prior, grid)))};
    });
    std::vector<double> re, ri;
    for (const auto& rep : reps) {
      re.push_back(rep.emrm_risk);
      ri.push_back(rep.imrm_risk);
    }
    const auto me = detail::mean_se(re), mi = detail::mean_se(ri);
    t.rows.push_back({alpha, bound.total, me.mean, mi.mean, me.se, mi.se});
  }
  return t;
}

/// Single IMRM-Gibbs draws: empirical upper quantiles of the transfer gap and
/// of the per-draw single-draw bound, for delta in {0.25, 0.5, 0.75}.
inline Table run_fig_singledraw(const ExperimentConfig& cfg, int threads = 1) {
  cfg.validate();
  const auto n_values = detail::integer_sweep(cfg.sweep, "fig-singledraw");
  const HyperGrid grid(cfg.grid_size);
  static constexpr double kDeltas[3] = {0.25, 0.5, 0.75};
  Table t{"fig-singledraw",
          describe(cfg),
          {"N", "delta", "empirical_quantile_gap", "thm5_bound_quantile", "violation_rate", "clamped_fraction"},
          {}};
  for (const int N : n_values) {
    MetaTrainConfig train = cfg.train;
    train.N = N;
    train.validate();
    struct Rep {
      double gap = 0.0;
      double bound[3] = {0, 0, 0};
      bool clamped[3] = {false, false, false};
    };
    const auto reps = parallel_map<Rep>(static_cast<std::size_t>(cfg.replicates), threads, [&](std::size_t r) {
      Rng rng = Rng::stream(cfg.seed, r);
      const auto data = sample_meta_dataset(cfg.env, train, rng);
      const auto post = imrm_posterior(data, cfg.hyper_prior, grid);
      const double u = imrm_sample(post, rng);
      Rep out;
      out.gap = transfer_gap(u, data, cfg.env);
      for (int d = 0; d < 3; ++d) {
        const auto rep = single_draw_bound_thm5(u, data, post, cfg.env, cfg.consts, kDeltas[d], cfg.hyper_prior);
        out.bound[d] = rep.total;
        out.clamped[d] = rep.clamped;
      }
      return out;
    });
    std::vector<double> gaps;
    for (const auto& rep : reps) gaps.push_back(rep.gap);
    for (int d = 0; d < 3; ++d) {
      std::vector<double> bounds;
      long violations = 0, clamped = 0;
      for (const auto& rep : reps) {
        bounds.push_back(rep.bound[d]);
        violations += std::abs(rep.gap) > rep.bound[d] ? 1 : 0;
        clamped += rep.clamped[d] ? 1 : 0;
      }
      const double n = static_cast<double>(reps.size());
      t.rows.push_back({static_cast<long>(N), kDeltas[d], detail::upper_quantile(gaps, kDeltas[d]),
                        detail::upper_quantile(bounds, kDeltas[d]), violations / n, clamped / n});
    }
  }
  return t;
}

inline MetaLearner make_learner(const ExperimentConfig& cfg, const HyperGrid& grid) {
  switch (cfg.learner) {
    case LearnerKind::emrm: return emrm_learner(grid);
    case LearnerKind::imrm_mode: return imrm_mode_learner(grid, cfg.hyper_prior);
    case LearnerKind::imrm_gibbs: return imrm_gibbs_learner(grid, cfg.hyper_prior);
    case LearnerKind::constant: return constant_learner(cfg.learner_u);
  }
  return emrm_learner(grid);
}

/// Every bound evaluated once, with term breakdowns. Rows for bounds whose
/// preconditions the configuration violates are omitted.
inline Table run_bounds(const ExperimentConfig& cfg, int threads = 1) {
  cfg.validate();
  const HyperGrid grid(cfg.grid_size);
  Table t{"bounds",
          describe(cfg),
          {"bound", "env_shift_term", "env_sensitivity_term", "within_task_term", "extra_terms_total", "extra_terms",
           "total", "delta", "clamped"},
          {}};
  auto add = [&](const BoundReport& rep) {
    std::string extras;
    for (const auto& [name, v] : rep.extra_terms) {
      if (!extras.empty()) extras += ';';
      extras += name + '=' + format_number(v);
    }
    t.rows.push_back({rep.name, rep.env_shift_term, rep.env_sensitivity_term, rep.within_task_term, rep.extra_sum(),
                      extras, rep.total, rep.delta, static_cast<long>(rep.clamped)});
  };
  const auto& train = cfg.train;
  const bool two_blocks = !train.single_block();
  {
    Rng rng = Rng::stream(cfg.seed, 0xb1);
    add(avg_gap_bound_thm1(cfg.env, train, make_learner(cfg, grid), cfg.consts, cfg.mi_budget(threads), rng));
  }
  if (two_blocks) {
    Rng rng = Rng::stream(cfg.seed, 0xb2);
    add(excess_risk_bound_thm2(cfg.env, train, cfg.consts, grid, cfg.mi_budget(threads), rng));
  }
  Rng rng = Rng::stream(cfg.seed, 0, 0);
  const auto data = sample_meta_dataset(cfg.env, train, rng);
  const auto post = imrm_posterior(data, cfg.hyper_prior, grid);
  if (two_blocks) {
    add(pac_bound_thm3(data, post, cfg.env, cfg.consts, cfg.delta, cfg.hyper_prior));
    add(pac_bound_loose_cor4(data, post, cfg.env, cfg.consts, cfg.delta, cfg.hyper_prior));
  }
  if (two_blocks || cfg.env.matched()) {
    const double u = imrm_sample(post, rng);
    add(single_draw_bound_thm5(u, data, post, cfg.env, cfg.consts, cfg.delta, cfg.hyper_prior));
  }
  return t;
}

}  // namespace tml
