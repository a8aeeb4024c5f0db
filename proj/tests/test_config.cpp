#include <gtest/gtest.h>

#include <sstream>

#include "tml/config.hpp"

using namespace tml;

TEST(Config, ParsesKeyValueLines) {
  ExperimentConfig cfg;
  std::istringstream in(
      "# comment\n"
      "env.source.a = 2.5\n"
      "  train.N=12  \n"
      "\n"
      "seed = 18446744073709551615\n"
      "sweep = 0.1, 0.2 ,0.3\n"
      "learner = imrm_gibbs\n");
  apply_config_text(cfg, in);
  EXPECT_EQ(cfg.env.source.a, 2.5);
  EXPECT_EQ(cfg.train.N, 12);
  EXPECT_EQ(cfg.seed, 18446744073709551615ull);
  EXPECT_EQ(cfg.sweep, (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_EQ(cfg.learner, LearnerKind::imrm_gibbs);
}

TEST(Config, Errors) {
  ExperimentConfig cfg;
  EXPECT_THROW(set_config_value(cfg, "env.source.c", "1"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "train.N", "eight"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "train.N", "8.5"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "delta", "nan"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "env.target.b", "-1"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "learner", "sgd"), ConfigError);
  std::istringstream bad("no equals sign here\n");
  EXPECT_THROW(apply_config_text(cfg, bad), ConfigError);
  EXPECT_THROW(apply_config_file(cfg, "/nonexistent/file.cfg"), ConfigError);
}

TEST(Config, Validation) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = [](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](auto& c) { c.replicates = 0; });
  bad([](auto& c) { c.grid_size = 2; });
  bad([](auto& c) { c.delta = 1.0; });
  bad([](auto& c) { c.mi_replicates = 99; });
  bad([](auto& c) { c.train.M = 0; });
  bad([](auto& c) { c.consts.sigma_sq = 0.0; });
}

TEST(Config, DescribeRoundTrips) {
  ExperimentConfig cfg;
  cfg.env.target = {4.45, 5.55};
  cfg.train.alpha_weight = 0.123456789012345;
  cfg.sweep = {5, 10};
  const std::string line = describe(cfg);
  ExperimentConfig back;
  std::istringstream words(line);
  std::string kv;
  while (words >> kv) {
    const auto eq = kv.find('=');
    set_config_value(back, kv.substr(0, eq), kv.substr(eq + 1));
  }
  EXPECT_EQ(describe(back), line);
  EXPECT_EQ(back.env.target, cfg.env.target);
  EXPECT_EQ(back.sweep, cfg.sweep);
}

TEST(Config, TwelveSignificantDigits) {
  EXPECT_EQ(format_number(0.1234567890123456), "0.123456789012");
  EXPECT_EQ(format_number(1.0 / 3.0 * 1e-7), "3.33333333333e-08");
  EXPECT_EQ(format_number(5.0), "5");
}
