// Command-line harness: one subcommand per experiment plus `bounds`.
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "tml/experiments.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> replicates;
  std::optional<int> grid;
  int threads = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config_path, "key = value config file");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--out", f.out, "output CSV path (default: stdout)");
  sub->add_option("--replicates", f.replicates, "replicate count")->check(CLI::PositiveNumber);
  sub->add_option("--grid", f.grid, "hyperparameter grid size");
  sub->add_option("--threads", f.threads, "worker threads (0 = all cores); output does not depend on it");
  sub->add_option("--set", f.overrides, "extra key=value override, repeatable");
}

tml::ExperimentConfig resolve(const std::string& command, const CommonFlags& f) {
  auto cfg = tml::default_config(command);
  if (!f.config_path.empty()) tml::apply_config_file(cfg, f.config_path);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw tml::ConfigError("--set expects key=value, got '" + kv + "'");
    tml::set_config_value(cfg, tml::detail::trim(kv.substr(0, eq)), tml::detail::trim(kv.substr(eq + 1)));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.replicates) cfg.replicates = *f.replicates;
  if (f.grid) cfg.grid_size = *f.grid;
  cfg.validate();
  return cfg;
}

tml::Table run(const std::string& command, const tml::ExperimentConfig& cfg, int threads) {
  if (command == "fig-posterior") return tml::run_fig_posterior(cfg);
  if (command == "fig-scaling") return tml::run_fig_scaling(cfg, threads);
  if (command == "fig-shift") return tml::run_fig_shift(cfg, threads);
  if (command == "fig-alpha") return tml::run_fig_alpha(cfg, threads);
  if (command == "fig-singledraw") return tml::run_fig_singledraw(cfg, threads);
  return tml::run_bounds(cfg, threads);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer meta-learning simulator (Beta-Bernoulli environment)"};
  app.set_version_flag("--version", std::string(tml::kVersion));
  app.require_subcommand(1);
  CommonFlags flags;
  const char* commands[][2] = {
      {"fig-posterior", "hyper-prior, IMRM hyper-posterior and EMRM on one dataset"},
      {"fig-scaling", "average losses versus M with N = round(M / 0.85)"},
      {"fig-shift", "gaps and average-gap bound versus source environment shift"},
      {"fig-alpha", "excess-risk bound and empirical excess risk versus alpha"},
      {"fig-singledraw", "single-draw gap quantiles and bound quantiles versus N"},
      {"bounds", "evaluate every applicable bound once with term breakdowns"},
  };
  for (const auto& c : commands) add_common(app.add_subcommand(c[0], c[1]), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(command, flags);
    const auto table = run(command, cfg, flags.threads);
    std::ostringstream csv;
    tml::write_csv(table, csv);
    if (flags.out.empty()) {
      std::cout << csv.str();
    } else {
      std::ofstream os(flags.out, std::ios::binary);
      if (!os) throw tml::ConfigError("cannot open output file '" + flags.out + "'");
      os << csv.str();
    }
    return 0;
  } catch (const tml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const tml::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::domain_error& e) {
    // Arguments that validated but left a function's domain mid-computation.
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::overflow_error& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
