#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ffmagic/errors.hpp"
#include "ffmagic/harness.hpp"

namespace ffmagic {

namespace {

std::string dashed(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (c == '_') c = '-';
  return out;
}

ExperimentConfig load_config(const std::string& path, ExperimentKind kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  ExperimentConfig config = ExperimentConfig::from_json(j);
  if (j.contains("kind") && config.kind != kind)
    throw ConfigError("config kind '" + to_string(config.kind) +
                      "' does not match the subcommand '" + to_string(kind) + "'");
  config.kind = kind;
  return config;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"monitored free-fermion circuits: magic and entanglement experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> threads_override;
  bool resume = false;
  std::optional<ExperimentKind> chosen;

  static const std::vector<std::pair<ExperimentKind, std::string>> kinds = {
      {ExperimentKind::steady_sre, "steady-state magic vs system size and rate"},
      {ExperimentKind::steady_bsmi_vs_l, "half-cut magic mutual information vs system size"},
      {ExperimentKind::bsmi_vs_subsystem, "magic mutual information vs cut position"},
      {ExperimentKind::disjoint_smi_cross_ratio,
       "disjoint-region magic mutual information vs cross ratio"},
      {ExperimentKind::dynamics_sre, "magic growth time series"},
      {ExperimentKind::dynamics_bsmi, "magic mutual information time series"},
      {ExperimentKind::haar_appendix, "Haar ensemble magic: analytic vs Monte Carlo"},
  };
  for (const auto& [kind, help] : kinds) {
    CLI::App* sub = app.add_subcommand(dashed(to_string(kind)), help);
    sub->add_option("--config", config_path, "experiment config file (JSON)")
        ->required();
    sub->add_option("--out", out_override, "output directory (overrides the config)");
    sub->add_option("--seed", seed_override, "master seed (overrides the config)");
    sub->add_option("--threads", threads_override, "worker threads (overrides the config)");
    sub->add_flag("--resume", resume, "continue from the checkpoint file in the output dir");
    const ExperimentKind k = kind;
    sub->callback([&chosen, k] { chosen = k; });
  }

  try {
    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 2;
    }

    ExperimentConfig config = load_config(config_path, *chosen);
    if (!out_override.empty()) config.out_dir = out_override;
    if (seed_override) config.master_seed = *seed_override;
    if (threads_override) config.threads = *threads_override;
    config.validate();

    const RunResult result = run_experiment(config, resume);
    write_outputs(config, result);

    std::cout << "wrote " << config.out_dir << "/" << to_string(config.kind)
              << ".{csv,json,gp}: " << result.table.rows.size() << " rows, " << result.n_jobs
              << " trajectories, " << result.n_discarded << " discarded\n";
    std::cout << std::setprecision(6);
    for (const auto& [key, f] : result.fits) {
      std::cout << "fit " << key << " " << to_string(f.model) << ": a = " << f.a << " +- "
                << f.a_err << ", c = " << f.c << " +- " << f.c_err << ", R2 = " << f.r_squared
                << " (" << f.n_points << " points)\n";
    }
    return 0;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace ffmagic
