#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tml/environment.hpp"

using namespace tml;

namespace {
const EnvironmentConfig kFig3{{1.5, 7.5}, {4, 5}};
}

TEST(SourceTaskCount, RoundingRule) {
  MetaTrainConfig c;
  c.N = 8;
  c.beta_frac = 0.6;
  EXPECT_EQ(c.source_tasks(), 5);
  c.N = 23;
  c.beta_frac = 0.4;
  EXPECT_EQ(c.source_tasks(), 9);
  c.N = 5;
  c.beta_frac = 0.25;
  EXPECT_EQ(c.source_tasks(), 1);
  c.N = 2;
  c.beta_frac = 0.01;
  EXPECT_EQ(c.source_tasks(), 1);  // clamped so the source block is nonempty
  c.beta_frac = 0.99;
  EXPECT_EQ(c.source_tasks(), 1);  // and so is the target block
  c.beta_frac = 1.0;
  c.alpha_weight = 1.0;
  EXPECT_EQ(c.source_tasks(), 2);
}

TEST(MetaTrainConfig, ValidationErrors) {
  MetaTrainConfig c;
  EXPECT_NO_THROW(c.validate());
  auto bad = [&](auto mutate) {
    MetaTrainConfig d;
    mutate(d);
    EXPECT_THROW(d.validate(), ConfigError);
  };
  bad([](auto& d) { d.N = 0; });
  bad([](auto& d) { d.M = 0; });
  bad([](auto& d) { d.beta_frac = 0.0; });
  bad([](auto& d) { d.beta_frac = 1.2; });
  bad([](auto& d) { d.alpha_weight = -0.1; });
  bad([](auto& d) { d.gamma = 1.5; });
  bad([](auto& d) { d.c = 0.0; });
  bad([](auto& d) { d.beta_frac = 1.0; d.alpha_weight = 0.5; });
  bad([](auto& d) { d.N = 1; });
}

TEST(SampleMetaDataset, BlocksAndDeterminism) {
  MetaTrainConfig cfg;  // N=8, M=10, beta=0.6
  Rng a(42), b(42);
  const auto d1 = sample_meta_dataset(kFig3, cfg, a);
  const auto d2 = sample_meta_dataset(kFig3, cfg, b);
  ASSERT_EQ(d1.tasks.size(), 8u);
  int src = 0;
  for (std::size_t i = 0; i < d1.tasks.size(); ++i) {
    const auto& t = d1.tasks[i];
    src += t.from_source;
    EXPECT_EQ(t.size(), 10);
    int ones = 0;
    for (auto z : t.samples) ones += z;
    EXPECT_EQ(ones, t.count);
    EXPECT_EQ(t.samples, d2.tasks[i].samples);
    EXPECT_EQ(t.task_mean, d2.tasks[i].task_mean);
  }
  EXPECT_EQ(src, 5);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(d1.tasks[i].from_source);
}

TEST(SampleMetaDataset, ConcentratedTasks) {
  MetaTrainConfig cfg;
  cfg.N = 50;
  cfg.M = 20;
  const EnvironmentConfig env{{1e6, 1e6}, {1e6, 1e6}};
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    for (const auto& t : sample_meta_dataset(env, cfg, rng).tasks) {
      EXPECT_GE(t.count, 3);
      EXPECT_LE(t.count, 17);
      EXPECT_NEAR(t.task_mean, 0.5, 0.01);
    }
  }
}

TEST(CountView, HidesTaskMeans) {
  MetaTrainConfig cfg;
  Rng rng(1);
  const auto d = sample_meta_dataset(kFig3, cfg, rng);
  const auto v = CountView::of(d);
  EXPECT_EQ(v.M, 10);
  EXPECT_EQ(v.n_src, 5);
  for (std::size_t i = 0; i < d.tasks.size(); ++i) EXPECT_EQ(v.counts[i], d.tasks[i].count);
}

TEST(SequenceLogMarginal, KnownValues) {
  EXPECT_NEAR(sequence_log_marginal(1, 1, {1, 1}), std::log(0.5), 1e-14);
  EXPECT_NEAR(sequence_log_marginal(0, 2, {1, 1}), std::log(1.0 / 3.0), 1e-14);
  EXPECT_THROW(sequence_log_marginal(3, 2, {1, 1}), std::domain_error);
}

TEST(SequenceLogMarginal, MatchesMonteCarloAndQuadrature) {
  oracle::Sampler s(3);
  oracle::Accumulator acc;
  for (long i = 0; i < 10000000; ++i) {
    const double t = s.beta(1.5, 7.5);
    acc.add(std::pow(t, 3) * std::pow(1 - t, 7));
  }
  const double v = std::exp(sequence_log_marginal(3, 10, {1.5, 7.5}));
  EXPECT_NEAR(v, acc.result().mean, 4 * acc.result().se);
  EXPECT_NEAR(v, oracle::sequence_prob(3, 10, 1.5, 7.5), 1e-13);
}

TEST(CountLogPmf, SumsToOne) {
  double s = 0.0;
  for (int k = 0; k <= 13; ++k) s += std::exp(count_log_pmf(k, 13, {1.5, 7.5}));
  EXPECT_NEAR(s, 1.0, 1e-13);
}

TEST(KlDataMarginals, Examples) {
  for (int M : {1, 4, 17}) EXPECT_EQ(kl_data_marginals(M, {{2, 3}, {2, 3}}), 0.0);
  EXPECT_NEAR(kl_data_marginals(5, kFig3), oracle::kl_sequences_enumerated(5, 1.5, 7.5, 4, 5), 1e-10);
  double prev = 0.0;
  for (int M = 1; M <= 20; ++M) {
    const double kl = kl_data_marginals(M, kFig3);
    EXPECT_GE(kl, prev - 1e-14) << M;
    prev = kl;
  }
  // bounded by the task-level divergence (data processing)
  EXPECT_LT(prev, kl_beta_beta(kFig3.source, kFig3.target));
  EXPECT_THROW(kl_data_marginals(0, kFig3), std::domain_error);
}

TEST(TaskLogLikelihoodRatio, Examples) {
  EXPECT_EQ(task_log_likelihood_ratio(0.3, {{2, 3}, {2, 3}}), 0.0);
  const double ref = std::log(oracle::beta_pdf(0.5, 1.5, 7.5) / oracle::beta_pdf(0.5, 4, 5));
  EXPECT_NEAR(task_log_likelihood_ratio(0.5, kFig3), ref, 1e-12);

  // E_{P_T}[ratio] = D(P_T || P'_T) > 0
  oracle::Sampler s(8);
  oracle::Accumulator acc;
  for (int i = 0; i < 1000000; ++i) acc.add(task_log_likelihood_ratio(s.beta(1.5, 7.5), kFig3));
  EXPECT_GT(acc.result().mean - 4 * acc.result().se, 0.0);
  EXPECT_NEAR(acc.result().mean, oracle::kl_beta_quadrature(1.5, 7.5, 4, 5), 4 * acc.result().se);
}
