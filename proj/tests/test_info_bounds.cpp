#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tml/info_bounds.hpp"
#include "tml/parallel.hpp"

using namespace tml;

namespace {

const EnvironmentConfig kFig3Env{{1.5, 7.5}, {4, 5}};
const EnvironmentConfig kMatched{{4, 5}, {4, 5}};
const MetaTrainConfig kFig3Train{8, 10, 0.6, 0.1, 0.55, 5.0};
const BetaParams kHyperPrior{1.8, 2.5};
const SubGaussianConsts kConsts;

double binary_entropy(double p) { return -p * std::log(p) - (1 - p) * std::log(1 - p); }

double find_diag(const BoundReport& r, const std::string& key) {
  for (const auto& [k, v] : r.diagnostics) {
    if (k == key) return v;
  }
  ADD_FAILURE() << "missing diagnostic " << key;
  return NAN;
}

MiBudget small_budget() { return {2000, 40, 10, 300, 1}; }

}  // namespace

TEST(Parallel, ThreadCountDoesNotChangeResults) {
  auto f = [](std::size_t i) {
    Rng r = Rng::stream(9, i);
    return r.uniform() * 1e-3 + static_cast<double>(i);
  };
  const auto a = parallel_map<double>(1001, 1, f);
  const auto b = parallel_map<double>(1001, 4, f);
  EXPECT_EQ(a, b);
  EXPECT_EQ(pairwise_sum(a), pairwise_sum(b));
  EXPECT_THROW(parallel_map<int>(50, 3, [](std::size_t i) -> int {
                 if (i == 17) throw NumericError("boom");
                 return 0;
               }),
               NumericError);
}

TEST(MiHyperTask, ConstantLearnerIsZero) {
  Rng rng(1);
  const auto est = mi_hyper_task(constant_learner(0.3), kFig3Env, kFig3Train, 2, 4000, 40, rng);
  EXPECT_EQ(est.value, 0.0);
  EXPECT_LE(est.value, 40.0 * 11 / (2 * 4000));
}

TEST(MiHyperTask, CopyOfCountGivesCountEntropy) {
  MetaTrainConfig cfg{3, 2, 0.5, 0.5, 0.55, 5.0};
  const MetaLearner copy = [](const CountView& v, Rng&) { return v.counts[0] / double(v.M); };
  Rng rng(2);
  // the copy learner is not symmetric in the tasks, so no pooling
  const auto est = mi_hyper_task(copy, kFig3Env, cfg, 0, 20000, 40, rng, 1, MiPooling::per_task);
  double h = 0.0;
  for (int k = 0; k <= 2; ++k) {
    const double p = (k == 1 ? 2 : 1) * oracle::sequence_prob(k, 2, 1.5, 7.5);
    h -= p * std::log(p);
  }
  EXPECT_NEAR(est.value, h, 0.02);
  // other tasks carry no information about U
  Rng rng2(3);
  EXPECT_LT(mi_hyper_task(copy, kFig3Env, cfg, 2, 20000, 40, rng2, 1, MiPooling::per_task).value, 0.01);
}

TEST(MiHyperTask, EmrmSeedStability) {
  const EnvironmentConfig env{{2.25, 6.75}, {4, 5}};
  const MetaTrainConfig cfg{10, 5, 0.6, 0.6, 0.55, 5.0};
  const HyperGrid grid(201);
  Rng a(10), b(20);
  const auto x = mi_hyper_task(emrm_learner(grid), env, cfg, 1, 20000, 40, a);
  const auto y = mi_hyper_task(emrm_learner(grid), env, cfg, 1, 20000, 40, b);
  EXPECT_GT(x.value, 0.0);
  EXPECT_NEAR(x.value, y.value, 0.1 * std::max(x.value, y.value));
}

TEST(MiHyperTask, BlockPoolingMatchesPerTaskAverage) {
  const EnvironmentConfig env{{2.25, 6.75}, {4, 5}};
  const MetaTrainConfig cfg{10, 5, 0.6, 0.6, 0.55, 5.0};
  const HyperGrid grid(201);
  const auto draws = draw_hyperparameters(emrm_learner(grid), env, cfg, 20000, 77);
  const auto pooled = mi_hyper_tasks(draws, cfg.M, 40, cfg.source_tasks());
  const auto single = mi_hyper_tasks(draws, cfg.M, 40, cfg.source_tasks(), MiPooling::per_task);
  double mean = 0.0;
  for (int i = 0; i < cfg.source_tasks(); ++i) mean += single[i].value / cfg.source_tasks();
  // per-task plug-in bias is about (40 - 1) * (6 - 1) / (2 * 20000)
  const double bias = 39.0 * 5 / 40000;
  EXPECT_NEAR(pooled[0].value, mean - bias, 0.01);
  for (int i = 1; i < cfg.source_tasks(); ++i) EXPECT_EQ(pooled[i].value, pooled[0].value);
}

TEST(MiHyperTask, Errors) {
  Rng rng(1);
  EXPECT_THROW(mi_hyper_task(constant_learner(0.3), kFig3Env, kFig3Train, 0, 99, 40, rng), ConfigError);
  EXPECT_THROW(mi_hyper_task(constant_learner(0.3), kFig3Env, kFig3Train, 8, 200, 40, rng), ConfigError);
}

TEST(MiModelSample, GammaZeroIsZero) {
  MetaTrainConfig cfg = kFig3Train;
  cfg.gamma = 0.0;
  Rng rng(1);
  for (const auto& e : mi_model_samples(HyperSource::fixed(0.4), 0.3, cfg, 500, rng)) EXPECT_EQ(e.value, 0.0);
}

TEST(MiModelSample, SingleSampleCopyGivesBinaryEntropy) {
  MetaTrainConfig cfg{2, 1, 1.0, 1.0, 1.0, 1e4};
  for (double tau : {0.2, 0.5, 0.7}) {
    Rng rng(4);
    const auto e = mi_model_sample(HyperSource::fixed(0.5), tau, cfg, 0, 20000, rng);
    EXPECT_NEAR(e.value, binary_entropy(tau), 4 * e.std_err + 1e-3) << tau;
  }
}

TEST(MiModelSample, Exchangeable) {
  Rng rng(5);
  const auto est = mi_model_samples(HyperSource::fixed(0.35), 0.4, kFig3Train, 20000, rng);
  const auto& a = est[0];
  const auto& b = est[1];
  EXPECT_NEAR(a.value, b.value, 3 * std::hypot(a.std_err, b.std_err));
  EXPECT_GT(a.value, 0.0);
}

TEST(Thm1, MatchedConstantGammaZeroIsZero) {
  MetaTrainConfig cfg = kFig3Train;
  cfg.gamma = 0.0;
  Rng rng(1);
  const auto rep = avg_gap_bound_thm1(kMatched, cfg, constant_learner(0.4), kConsts, small_budget(), rng);
  EXPECT_EQ(rep.total, 0.0);
}

TEST(Thm1, ShiftOnlyTermIsExact) {
  MetaTrainConfig cfg = kFig3Train;
  cfg.gamma = 0.0;
  Rng rng(1);
  const auto rep = avg_gap_bound_thm1(kFig3Env, cfg, constant_learner(0.4), kConsts, small_budget(), rng);
  const double d = oracle::kl_sequences_enumerated(10, 1.5, 7.5, 4, 5);
  EXPECT_NEAR(rep.total, cfg.alpha_weight * std::sqrt(2 * 0.25 * d), 1e-10);
}

TEST(Thm1, SourceOnlyConfiguration) {
  MetaTrainConfig cfg{6, 5, 1.0, 1.0, 0.55, 5.0};
  Rng rng(1);
  const HyperGrid grid(201);
  const auto rep = avg_gap_bound_thm1(kMatched, cfg, emrm_learner(grid), kConsts, small_budget(), rng);
  EXPECT_EQ(rep.env_sensitivity_term, 0.0);
  EXPECT_GT(rep.env_shift_term, 0.0);
  EXPECT_NEAR(rep.total, rep.env_shift_term + rep.within_task_term, 1e-15);
}

TEST(Thm1, ThreadCountInvariant) {
  const HyperGrid grid(201);
  auto budget = small_budget();
  Rng a(3), b(3);
  const auto r1 = avg_gap_bound_thm1(kFig3Env, kFig3Train, emrm_learner(grid), kConsts, budget, a);
  budget.threads = 3;
  const auto r2 = avg_gap_bound_thm1(kFig3Env, kFig3Train, emrm_learner(grid), kConsts, budget, b);
  EXPECT_EQ(r1.total, r2.total);
}

TEST(Thm2, ReducesToThm1WhenAddedTermsVanish) {
  MetaTrainConfig cfg = kFig3Train;
  cfg.gamma = 0.0;
  const HyperGrid grid(201);
  Rng a(7), b(7);
  const auto t1 = avg_gap_bound_thm1(kMatched, cfg, emrm_learner(grid), kConsts, small_budget(), a);
  const auto t2 = excess_risk_bound_thm2(kMatched, cfg, kConsts, grid, small_budget(), b);
  EXPECT_EQ(t2.extra_sum(), 0.0);
  EXPECT_NEAR(t2.total, t1.total, 1e-15);
}

TEST(Thm2, ExceedsEmpiricalExcessRisk) {
  const EnvironmentConfig env{{1.67, 8.3}, {4.45, 5.55}};
  const MetaTrainConfig cfg{23, 15, 0.4, 0.3, 0.55, 5.0};
  const HyperGrid grid(201);
  Rng rng(2);
  const auto rep = excess_risk_bound_thm2(env, cfg, kConsts, grid, small_budget(), rng);
  oracle::Accumulator acc;
  for (int r = 0; r < 500; ++r) {
    Rng s = Rng::stream(99, r);
    const auto d = sample_meta_dataset(env, cfg, s);
    acc.add(transfer_excess_risk(emrm(d, grid), env, cfg.gamma, cfg.c, cfg.M, grid));
  }
  EXPECT_GE(rep.total, acc.result().mean - 2 * acc.result().se);
}

TEST(Thm3, PriorPosteriorMatchedEnvironments) {
  const HyperGrid grid(201);
  Rng rng(1);
  const auto d = sample_meta_dataset(kMatched, kFig3Train, rng);
  const auto post = imrm_posterior(d, kHyperPrior, grid, {0.0});
  const double delta = 0.2;
  const auto rep = pac_bound_thm3(d, post, kMatched, kConsts, delta, kHyperPrior);
  const double a = kFig3Train.alpha_weight;
  const double expect = std::sqrt(2 * 0.25 * (a * a / 5 + (1 - a) * (1 - a) / 3) * std::log(2 / delta));
  EXPECT_NEAR(rep.env_shift_term, expect, 1e-14);
}

TEST(Thm3, DecreasesInDelta) {
  const HyperGrid grid(201);
  Rng rng(2);
  const auto d = sample_meta_dataset(kFig3Env, kFig3Train, rng);
  const auto post = imrm_posterior(d, kHyperPrior, grid);
  double prev = INFINITY;
  for (double delta : {0.01, 0.1, 0.3, 0.6, 0.9, 0.999}) {
    const double t = pac_bound_thm3(d, post, kFig3Env, kConsts, delta, kHyperPrior).total;
    EXPECT_LT(t, prev);
    prev = t;
  }
  EXPECT_THROW(pac_bound_thm3(d, post, kFig3Env, kConsts, 1.0, kHyperPrior), ConfigError);
}

TEST(Cor4, GibbsMinimizesFreeEnergy) {
  const HyperGrid grid(201);
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = sample_meta_dataset(kFig3Env, kFig3Train, rng);
    const auto post = imrm_posterior(d, kHyperPrior, grid);
    std::vector<double> lw(grid.size(), -1e3);
    lw[grid.nearest(emrm(d, grid))] = 0.0;
    const auto point = make_grid_posterior(grid, lw);
    EXPECT_LE(imrm_free_energy(post, d, kHyperPrior), imrm_free_energy(point, d, kHyperPrior));
    // and beats the prior itself
    EXPECT_LE(imrm_free_energy(post, d, kHyperPrior),
              imrm_free_energy(prior_on_grid(kHyperPrior, grid), d, kHyperPrior));
  }
}

TEST(Cor4, MatchedEnvironmentsHaveNoLogRatio) {
  const HyperGrid grid(201);
  Rng rng(4);
  const auto d = sample_meta_dataset(kMatched, kFig3Train, rng);
  const auto post = imrm_posterior(d, kHyperPrior, grid);
  const auto rep = pac_bound_loose_cor4(d, post, kMatched, kConsts, 0.2, kHyperPrior);
  EXPECT_EQ(rep.env_shift_term, 0.0);
  EXPECT_NEAR(rep.total, rep.within_task_term + rep.env_sensitivity_term + rep.extra_sum(), 1e-15);
}

TEST(Thm5, ConventionalMetaLearningCorollary) {
  const MetaTrainConfig cfg{6, 8, 1.0, 1.0, 0.55, 5.0};
  const HyperGrid grid(201);
  Rng rng(5);
  const auto d = sample_meta_dataset(kMatched, cfg, rng);
  const auto post = imrm_posterior(d, kHyperPrior, grid);
  const auto prior = prior_on_grid(kHyperPrior, grid);
  const double u = 0.4, delta = 0.3;
  const auto rep = single_draw_bound_thm5(u, d, post, kMatched, kConsts, delta, kHyperPrior);
  const double j = posterior_log_density(post, u) - posterior_log_density(prior, u);
  double within = 0.0;
  for (const auto& t : d.tasks) {
    const double kl = posterior_prior_kl(t.count / 8.0, u, 0.55, 5.0);
    within += std::sqrt(std::max(0.0, 2 * 0.25 / 8 * (kl + j + std::log(2 * 6 / delta))));
  }
  EXPECT_NEAR(rep.within_task_term, within / 6, 1e-12);
  EXPECT_NEAR(rep.env_shift_term, std::sqrt(std::max(0.0, 2 * 0.25 / 6 * (j + std::log(2 / delta)))), 1e-12);
  EXPECT_THROW(single_draw_bound_thm5(u, d, post, kFig3Env, kConsts, delta, kHyperPrior), ConfigError);
}

TEST(Thm5, PriorPosteriorGivesZeroInformationDensity) {
  const HyperGrid grid(201);
  Rng rng(6);
  const auto d = sample_meta_dataset(kFig3Env, kFig3Train, rng);
  const auto post = imrm_posterior(d, kHyperPrior, grid, {0.0});
  const double mode = imrm_mode(post);
  const auto rep = single_draw_bound_thm5(mode, d, post, kFig3Env, kConsts, 0.25, kHyperPrior);
  EXPECT_EQ(find_diag(rep, "mismatched_density"), 0.0);
  EXPECT_THROW(single_draw_bound_thm5(0.0, d, post, kFig3Env, kConsts, 0.25, kHyperPrior), std::domain_error);
}

TEST(BoundReport, NonFiniteTotalIsNumericError) {
  BoundReport r;
  r.name = "x";
  r.within_task_term = NAN;
  EXPECT_THROW(r.finalize(), NumericError);
}
