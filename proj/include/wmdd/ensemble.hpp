#pragma once

#include <span>
#include <vector>

#include "wmdd/nn.hpp"

namespace wmdd {

// Stacked outputs of K classifiers on one batch.
struct EnsembleOutput {
  Tensor logits;  // [K, b, C]
  Tensor probs;   // [K, b, C]

  std::size_t members() const { return logits.dim(0); }
  std::size_t batch() const { return logits.dim(1); }
  std::size_t classes() const { return logits.dim(2); }
};

// Runs every classifier on the same (already extracted) features [b, F].
EnsembleOutput ensemble_from_features(std::span<const Network> classifiers, const Tensor& features);

// Features are computed once by `generator` and shared by all classifiers.
EnsembleOutput ensemble_forward(const Network& generator, std::span<const Network> classifiers,
                                const Tensor& batch);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// Per-sample mode of the K member argmax votes; ties toward the lowest class.
std::vector<int> predict_mode(const EnsembleOutput& output);

// Per-sample argmax of the members' mean probability (pseudo-labels).
std::vector<int> mean_prob_labels(const EnsembleOutput& output);

struct Discrepancy {
  double value = 0.0;
  bool single_member = false;  // K == 1: value is 0 and carries no signal
};

// Batch mean over samples of sum_{k,c} |p_kc - mean_k p_kc|.
Discrepancy classifier_discrepancy(const EnsembleOutput& output);

// Gradient of classifier_discrepancy().value with respect to each member's
// logits, [K, b, C]. Uses sign(0) = 0 at ties.
Tensor discrepancy_logit_grad(const EnsembleOutput& output);

// Backpropagates dL/dp through a softmax row: dz = p * (g - <g, p>).
void softmax_backward_row(std::span<const double> probs, std::span<const double> grad_probs,
                          std::span<double> grad_logits);

}  // namespace wmdd
