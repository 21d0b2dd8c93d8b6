#pragma once

// Experiment driver: steady-state sweeps, dynamics time series, disjoint-
// region scans and the Haar-ensemble overlay. Runs trajectories through a
// work queue with deterministic per-job seeding, checkpoints finished
// trajectories to a sidecar file, and exports CSV + JSON + gnuplot outputs.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ffmagic/circuit.hpp"

namespace ffmagic {

enum class ExperimentKind {
  steady_sre,
  steady_bsmi_vs_l,
  bsmi_vs_subsystem,
  disjoint_smi_cross_ratio,
  dynamics_sre,
  dynamics_bsmi,
  haar_appendix,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct SweepGrid {
  /// System sizes; qubit counts for the Haar experiment.
  std::vector<int> l_values;
  /// Projective measurement rates; each entry becomes one sweep point.
  std::vector<double> p_values;
  /// Weak measurement strengths; each entry becomes one sweep point.
  std::vector<double> beta_values;
  std::vector<double> alpha_values{1.0, 2.0};
  /// Haar experiment only: log-purity per qubit (base 2), in [0, 1].
  std::vector<double> s_over_n_values;
};

struct FitWindow {
  double t_over_l_min = 0.08;
  double t_over_l_max = 0.6;
  double eta_max = 0.3;
};

struct ExperimentConfig {
  int version = 1;
  ExperimentKind kind = ExperimentKind::steady_sre;
  SweepGrid sweep;
  int n_trajectories = 200;
  int n_samples = 2000;
  /// Steady-state equilibration depth = factor * L. At least 4.
  int equilibration_factor = 4;
  /// Dynamics run length = factor * L.
  int depth_factor = 8;
  /// Dynamics recording stride; 0 selects the geometric step schedule.
  int measure_stride = 0;
  /// Draw the initial product-state bits per trajectory instead of |0...0>.
  bool random_initial_bits = false;
  /// Save equilibrated states so --resume can skip re-evolution.
  bool checkpoint_states = false;
  std::string out_dir = "out";
  std::uint64_t master_seed = 1;
  int threads = 1;
  FitWindow fit_window;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Throws ConfigError on anything the runners cannot execute.
  void validate() const;
};

/// Hash over every reproducibility-relevant field (out_dir and threads do
/// not count); stamped into checkpoint files so --resume rejects a run
/// whose configuration changed.
std::uint64_t config_digest(const ExperimentConfig& config);

enum class FitModel {
  linear_fit,  // y = a x + c
  log_fit,     // y = a ln x + c
  power_fit,   // y = c x^a
  exp_fit,     // y = c exp(-a x)
};

std::string to_string(FitModel model);

struct FitResult {
  FitModel model = FitModel::linear_fit;
  double a = 0.0;
  double a_err = 0.0;
  double c = 0.0;
  double c_err = 0.0;
  double r_squared = 0.0;
  int n_points = 0;

  nlohmann::json to_json() const;
};

/// Least squares in the model's linearizing coordinates (log-log for power,
/// semilog for exp). Needs >= 4 points; power and exp need positive data;
/// a constant abscissa is a degenerate design. All violations throw
/// InputError.
FitResult fit(std::span<const double> x, std::span<const double> y, FitModel model);

struct DataTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void write_csv(std::ostream& out) const;
};

struct RunResult {
  DataTable table;
  std::map<std::string, FitResult> fits;
  /// Kind-specific derived values and skipped-fit diagnostics.
  nlohmann::json notes;
  int n_jobs = 0;
  int n_discarded = 0;
};

/// Geometric-ish recording schedule for dynamics runs: every step with
/// stride > 0, otherwise {0, 1, 2, 3, 4, 6, 8, 11, ...} plus the final step.
std::vector<int> record_steps(int depth, int stride);

RunResult run_steady_state_sweep(const ExperimentConfig& config, bool resume = false);
RunResult run_dynamics(const ExperimentConfig& config, bool resume = false);
RunResult run_disjoint_smi(const ExperimentConfig& config, bool resume = false);
RunResult run_haar_appendix(const ExperimentConfig& config, bool resume = false);

/// Dispatch on config.kind.
RunResult run_experiment(const ExperimentConfig& config, bool resume = false);

/// Writes <kind>.csv, <kind>.json and <kind>.gp into config.out_dir and
/// removes the checkpoint files of a completed run.
void write_outputs(const ExperimentConfig& config, const RunResult& result);

/// Full command-line entry point; returns the process exit code
/// (0 success, 2 configuration error, 3 numerical abort).
int run_cli(const std::vector<std::string>& args);

}  // namespace ffmagic
