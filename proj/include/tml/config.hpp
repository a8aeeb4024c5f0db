#pragma once

// Experiment configuration: flat `key = value` files whose keys are the field
// paths of ExperimentConfig (e.g. `env.source.a = 1.5`). Unknown keys and
// malformed values raise ConfigError.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tml/environment.hpp"
#include "tml/errors.hpp"
#include "tml/info_bounds.hpp"
#include "tml/special_math.hpp"

namespace tml {

inline constexpr const char* kVersion = "1.0.0";

/// Learner used by the `bounds` subcommand for the average-gap bound.
enum class LearnerKind { emrm, imrm_mode, imrm_gibbs, constant };

inline const char* to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::emrm: return "emrm";
    case LearnerKind::imrm_mode: return "imrm_mode";
    case LearnerKind::imrm_gibbs: return "imrm_gibbs";
    case LearnerKind::constant: return "constant";
  }
  return "?";
}

struct ExperimentConfig {
  EnvironmentConfig env;
  MetaTrainConfig train;
  int grid_size = 201;
  std::uint64_t seed = 1;
  int replicates = 500;
  double delta = 0.2;
  int mi_replicates = 4000;
  int mi_bins = 40;
  int mi_model_replicates = 1000;
  int target_task_samples = 50;
  BetaParams hyper_prior{1.8, 2.5};
  SubGaussianConsts consts;
  LearnerKind learner = LearnerKind::emrm;
  double learner_u = 0.5;
  std::vector<double> sweep;

  void validate() const {
    train.validate();
    if (grid_size < 3) throw ConfigError("grid_size must be >= 3");
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (mi_replicates < 100) throw ConfigError("mi_replicates must be >= 100");
    if (mi_bins < 1) throw ConfigError("mi_bins must be >= 1");
    if (mi_model_replicates < 1) throw ConfigError("mi_model_replicates must be >= 1");
    if (target_task_samples < 1) throw ConfigError("target_task_samples must be >= 1");
    if (!(consts.sigma_sq > 0.0) || !(consts.delta_sq > 0.0)) throw ConfigError("sub-Gaussian constants must be > 0");
    if (!(learner_u > 0.0 && learner_u < 1.0)) throw ConfigError("learner_u must lie in (0, 1)");
  }

  MiBudget mi_budget(int threads) const {
    return {mi_replicates, mi_bins, target_task_samples, mi_model_replicates, threads};
  }
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError("invalid number for '" + key + "': '" + v + "'");
  }
  return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid integer for '" + key + "': '" + v + "'");
  return out;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

inline std::string join_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_number(v[i]);
  }
  return s;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  auto beta_field = [](auto sel, bool first) {
    return Field{[sel, first](C& c, const std::string& v) {
                   BetaParams& p = sel(c);
                   const double x = parse_double("shape", v);
                   p = first ? BetaParams(x, p.b) : BetaParams(p.a, x);
                 },
                 [sel, first](const C& c) {
                   const BetaParams& p = sel(const_cast<C&>(c));
                   return format_number(first ? p.a : p.b);
                 }};
  };
  auto real = [](double& (*sel)(C&), const char* key) {
    return Field{[sel, key](C& c, const std::string& v) { sel(c) = parse_double(key, v); },
                 [sel](const C& c) { return format_number(sel(const_cast<C&>(c))); }};
  };
  auto integer = [](int& (*sel)(C&), const char* key) {
    return Field{[sel, key](C& c, const std::string& v) { sel(c) = parse_int<int>(key, v); },
                 [sel](const C& c) { return std::to_string(sel(const_cast<C&>(c))); }};
  };
  static const std::vector<std::pair<std::string, Field>> table = {
      {"env.source.a", beta_field([](C& c) -> BetaParams& { return c.env.source; }, true)},
      {"env.source.b", beta_field([](C& c) -> BetaParams& { return c.env.source; }, false)},
      {"env.target.a", beta_field([](C& c) -> BetaParams& { return c.env.target; }, true)},
      {"env.target.b", beta_field([](C& c) -> BetaParams& { return c.env.target; }, false)},
      {"train.N", integer([](C& c) -> int& { return c.train.N; }, "train.N")},
      {"train.M", integer([](C& c) -> int& { return c.train.M; }, "train.M")},
      {"train.beta_frac", real([](C& c) -> double& { return c.train.beta_frac; }, "train.beta_frac")},
      {"train.alpha_weight", real([](C& c) -> double& { return c.train.alpha_weight; }, "train.alpha_weight")},
      {"train.gamma", real([](C& c) -> double& { return c.train.gamma; }, "train.gamma")},
      {"train.c", real([](C& c) -> double& { return c.train.c; }, "train.c")},
      {"grid_size", integer([](C& c) -> int& { return c.grid_size; }, "grid_size")},
      {"seed", Field{[](C& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); },
                     [](const C& c) { return std::to_string(c.seed); }}},
      {"replicates", integer([](C& c) -> int& { return c.replicates; }, "replicates")},
      {"delta", real([](C& c) -> double& { return c.delta; }, "delta")},
      {"mi_replicates", integer([](C& c) -> int& { return c.mi_replicates; }, "mi_replicates")},
      {"mi_bins", integer([](C& c) -> int& { return c.mi_bins; }, "mi_bins")},
      {"mi_model_replicates", integer([](C& c) -> int& { return c.mi_model_replicates; }, "mi_model_replicates")},
      {"target_task_samples", integer([](C& c) -> int& { return c.target_task_samples; }, "target_task_samples")},
      {"hyper_prior.a", beta_field([](C& c) -> BetaParams& { return c.hyper_prior; }, true)},
      {"hyper_prior.b", beta_field([](C& c) -> BetaParams& { return c.hyper_prior; }, false)},
      {"consts.sigma_sq", real([](C& c) -> double& { return c.consts.sigma_sq; }, "consts.sigma_sq")},
      {"consts.delta_sq", real([](C& c) -> double& { return c.consts.delta_sq; }, "consts.delta_sq")},
      {"learner", Field{[](C& c, const std::string& v) {
                          if (v == "emrm") c.learner = LearnerKind::emrm;
                          else if (v == "imrm_mode") c.learner = LearnerKind::imrm_mode;
                          else if (v == "imrm_gibbs") c.learner = LearnerKind::imrm_gibbs;
                          else if (v == "constant") c.learner = LearnerKind::constant;
                          else throw ConfigError("unknown learner '" + v + "'");
                        },
                        [](const C& c) { return std::string(to_string(c.learner)); }}},
      {"learner_u", real([](C& c) -> double& { return c.learner_u; }, "learner_u")},
      {"sweep", Field{[](C& c, const std::string& v) { c.sweep = parse_list("sweep", v); },
                      [](const C& c) { return join_list(c.sweep); }}},
  };
  return table;
}

}  // namespace detail

/// Sets one field by its path. Throws ConfigError for unknown keys or bad values.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : detail::fields()) {
    if (name == key) {
      try {
        field.set(cfg, value);
      } catch (const std::domain_error& e) {
        throw ConfigError("invalid value for '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Applies `key = value` lines; '#' starts a comment line.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& in) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_config_value(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(cfg, in);
}

/// Resolved `key=value` pairs separated by single spaces, in field order.
inline std::string describe(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : detail::fields()) {
    if (!out.empty()) out += ' ';
    out += name + '=' + field.get(cfg);
  }
  return out;
}

}  // namespace tml
