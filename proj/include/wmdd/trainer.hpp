#pragma once

// Alternating optimization of one feature generator, K ensemble classifiers
// and N auxiliary classifiers. Each iteration:
//   1. ascend the disparity objective on every auxiliary (all else frozen)
//   2. recompute source weights from fresh MDD estimates
//   3. descend the weighted source loss + disparity on generator/classifiers
//   4. classifiers: descend weighted source loss - eta * target discrepancy
//   5. generator: descend target discrepancy
// Steps 4-5 run only with the adversary enabled.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmdd/domains.hpp"
#include "wmdd/mdd.hpp"
#include "wmdd/model.hpp"

namespace wmdd {

struct TrainConfig {
  std::size_t n_iter = 400;
  std::size_t batch_size = kDefaultBatchSize;
  double learning_rate = 2e-4;
  std::size_t members = 5;  // K
  double eta = 5.0;
  double gamma = 0.1;
  double mu = 1.0;  // diagnostics only
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> data_seed;  // synthetic data seed; defaults to `seed`

  bool use_weights = true;
  bool use_adversary = true;
  bool use_disparity = true;  // false: source-only baseline (no steps 1-2)
  // Weights from the estimate's excess over the aligned-domain floor
  // (clamped at 0) rather than from the raw objective.
  bool center_weights = true;
  bool verify_freeze = true;
  // Extra ascent steps on copies of the auxiliaries before the final
  // estimate (0: use the auxiliaries as trained).
  std::size_t final_refine_steps = 200;

  // Dataset: a manifest path, or else a synthetic preset.
  std::string manifest;
  std::string preset = "near-far";
  std::size_t synth_n_per_domain = 400;
  std::size_t synth_classes = 4;
  std::size_t synth_channels = 2;
  std::size_t synth_width = 16;

  Architecture arch;
  double train_ratio = 0.7;
  std::size_t eval_every = 10;
  std::vector<std::uint64_t> seeds;  // seed list for ablation/sweep batteries

  // Throws ConfigError naming the first bad field.
  void validate() const;
  std::uint64_t effective_data_seed() const { return data_seed.value_or(seed); }
};

// Loads the manifest or generates the preset named by the config.
DatasetBundle resolve_dataset(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Objectives with gradients (no parameter mutation).

struct AuxObjective {
  double objective = 0.0;  // disparity objective, to be maximized
  Gradients grads;         // gradient of -objective w.r.t. the auxiliary
};

AuxObjective aux_objective(const ModelState& state, std::size_t source, const Tensor& source_batch,
                           const Tensor& target_batch, double gamma);

struct MainObjective {
  double source_loss = 0.0;     // sum_j alpha_j * mean_k CE
  double disparity_loss = 0.0;  // sum_j alpha_j * P_j
  double total = 0.0;
  Gradients generator;
  std::vector<Gradients> classifiers;
};

MainObjective main_objective(const ModelState& state, std::span<const double> alpha,
                             std::span<const Batch> sources, const Batch& target, double gamma,
                             bool use_disparity = true, bool with_grad = true);

struct MaxDiscObjective {
  double source_loss = 0.0;
  double discrepancy = 0.0;
  double total = 0.0;  // source_loss - eta * discrepancy
  std::vector<Gradients> classifiers;
};

MaxDiscObjective maxdisc_objective(const ModelState& state, std::span<const Batch> sources,
                                   const Batch& target, std::span<const double> alpha, double eta,
                                   bool with_grad = true);

struct MinDiscObjective {
  double discrepancy = 0.0;
  Gradients generator;
};

MinDiscObjective mindisc_objective(const ModelState& state, const Batch& target, bool with_grad = true);

// ---------------------------------------------------------------------------
// Steps. Each applies one Adam update to its parameter group and, when
// `verify` is set, checks by fingerprint that no other group moved.

double step_aux(ModelState& state, std::size_t source, const Batch& source_batch, const Batch& target_batch,
                double gamma, bool verify = true);

struct WeightStep {
  std::vector<mdd::MddEstimate> estimates;
  mdd::DomainWeights weights;
};

// Weights from raw estimates; see TrainConfig::center_weights.
mdd::DomainWeights weights_from_estimates(std::span<const double> estimates, double gamma, bool use_weights,
                                          bool center);

WeightStep compute_weights(const ModelState& state, std::span<const Batch> sources, const Batch& target,
                           double gamma, bool use_weights, bool center = true, std::size_t iteration = 0);

// Estimates after `steps` further ascent steps on copies of the auxiliaries
// (the best value along the way); `state` is unchanged.
std::vector<double> refined_estimates(const ModelState& state, std::span<const Batch> sources, const Batch& target,
                                      double gamma, std::size_t steps);

MainObjective step_main(ModelState& state, std::span<const double> alpha, std::span<const Batch> sources,
                        const Batch& target, double gamma, bool use_disparity = true, bool verify = true);

MaxDiscObjective step_maxdisc(ModelState& state, std::span<const Batch> sources, const Batch& target,
                              std::span<const double> alpha, double eta, bool verify = true);

double step_mindisc(ModelState& state, const Batch& target, bool verify = true);

// Zero-one accuracy of the ensemble's mode vote.
double evaluate(const ModelState& state, const Tensor& windows, std::span<const int> labels);

// ---------------------------------------------------------------------------

struct ReportRow {
  std::size_t iteration = 0;
  std::vector<double> mdd;
  std::vector<double> alpha;
  double source_loss = 0.0;
  double disparity_loss = 0.0;
  double discrepancy = 0.0;
  std::optional<double> target_accuracy;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct StepCounts {
  std::size_t aux = 0;
  std::size_t weights = 0;
  std::size_t main = 0;
  std::size_t maxdisc = 0;
  std::size_t mindisc = 0;
  std::size_t freeze_checks = 0;

  friend bool operator==(const StepCounts&, const StepCounts&) = default;
};

struct TrainReport {
  std::vector<std::string> source_ids;
  std::vector<ReportRow> rows;
  StepCounts steps;
  std::optional<double> final_accuracy;
  // Refined estimates and their weights over the full training splits
  // (the last row's values when the disparity term is off).
  std::vector<double> final_alpha;
  std::vector<double> final_mdd;
};

struct TrainResult {
  ModelState model;
  TrainReport report;
  DatasetBundle train_bundle;  // training splits (target unlabeled)
  DatasetBundle test_bundle;   // held-out splits, eval labels on the target
};

TrainResult train(const TrainConfig& config);
TrainResult train(const TrainConfig& config, const DatasetBundle& bundle);

}  // namespace wmdd
