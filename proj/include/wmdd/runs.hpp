#pragma once

// Run orchestration behind the command-line verbs: single training runs,
// ablation and sweep batteries, oracle suites, embedding export and
// synthetic bundle generation. Every file is written atomically.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wmdd/trainer.hpp"

namespace wmdd::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kValidationFailure = 2 };

// $WMDD_OUT_ROOT when set, else "runs" under the working directory.
std::filesystem::path default_output_root();

struct RunArtifacts {
  std::filesystem::path dir;
  std::filesystem::path config_snapshot;
  std::filesystem::path metrics;
  std::filesystem::path model;
  std::filesystem::path bound_report;
  std::filesystem::path summary;  // final weights, estimates, accuracy, step counts
  TrainReport report;
};

// Columns: iter, mdd_src_1..N, alpha_1..N, loss_src, loss_disp,
// discrepancy, target_acc (empty on rows without evaluation).
std::string metrics_csv(const TrainReport& report);

struct MetricsTable {
  std::size_t sources = 0;
  std::vector<ReportRow> rows;
};

// Parses and validates a metrics CSV; throws DataError on schema violations.
MetricsTable parse_metrics_csv(const std::string& text);

std::string summary_json(const TrainReport& report);

RunArtifacts cmd_train(const TrainConfig& config, const std::filesystem::path& out_dir);

struct ArmSummary {
  std::string name;
  std::string parameter;  // sweeps: swept value; ablation: the arm name
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;
  std::vector<double> final_mean_abs_mdd;  // per seed: mean_j |final MDD_j|
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (0 for one seed)
  std::vector<std::filesystem::path> metrics;
};

struct BatteryResult {
  std::vector<ArmSummary> arms;
  std::filesystem::path summary;
};

// Seeds of a battery: config.seeds, or {config.seed} when empty.
std::vector<std::uint64_t> battery_seeds(const TrainConfig& config);

// Arms full, No-W, No-A, No-W-A, each over every battery seed.
BatteryResult cmd_ablate(const TrainConfig& config, const std::filesystem::path& out_dir);

// `parameter` is one of gamma, K, eta.
BatteryResult cmd_sweep(const TrainConfig& config, const std::string& parameter,
                        const std::vector<double>& values, const std::filesystem::path& out_dir);

std::vector<double> parse_value_list(const std::string& text);

struct OracleCheck {
  std::string name;
  std::size_t cases = 0;
  std::size_t passes = 0;
  double max_error = 0.0;
  std::optional<std::string> counterexample;  // first failing case
  double seconds = 0.0;

  bool passed() const { return passes == cases && !counterexample; }
};

OracleCheck oracle_theorem4(std::size_t cases = 100, std::uint64_t seed = 1);
OracleCheck oracle_proposition1(std::size_t cases = 10000, std::uint64_t seed = 2);
OracleCheck oracle_gradcheck(std::size_t points = 100, std::uint64_t seed = 3);

// `check` is theorem4, proposition1, gradcheck or all.
std::vector<OracleCheck> cmd_oracle(const std::string& check);

// One row per sample of every domain: domain_id, label, pseudo_label,
// f_0..f_{F-1}. Target labels come from the evaluation labels when present,
// else -1.
std::filesystem::path cmd_export_embeddings(const std::filesystem::path& model_path, const TrainConfig& config,
                                            const std::filesystem::path& out_path);

std::filesystem::path cmd_synth(const TrainConfig& config, const std::filesystem::path& out_dir);

}  // namespace wmdd::cli
