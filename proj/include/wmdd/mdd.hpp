#pragma once

// Margin machinery and margin disparity discrepancy (MDD) estimation.
//
// The estimated MDD between source j and the target is the adversarial
// objective
//
//   P_j = E_target[ log(1 - p_aux(h(x))) ] + gamma * E_source[ log p_aux(h(x)) ]
//
// where p_aux is the softmax of auxiliary classifier j on generator
// features and h is the pseudo-label of the frozen main ensemble. Its
// maximum over discriminators equals
//   gamma*KL(P||Z) + KL(Q||Z) + gamma*log(gamma) - (1+gamma)*log(1+gamma),
// Z = (gamma*P + Q) / (1 + gamma), so it sits at the floor value exactly when
// the two domains coincide.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmdd/domains.hpp"
#include "wmdd/ensemble.hpp"
#include "wmdd/model.hpp"
#include "wmdd/nn.hpp"

namespace wmdd::mdd {

struct MarginConfig {
  double mu = 1.0;
  double gamma = 0.1;

  void validate() const;
};

// [f_y - max_{y' != y} f_y'] / 2
double margin(std::span<const double> scores, std::size_t label);

// 0 for v >= mu, 1 - v/mu on (0, mu), 1 for v <= 0.
double ramp_loss(double v, double mu);

// Mean ramp loss of the margins of `scores` [b, C] at `labels`.
double margin_loss(const Tensor& scores, std::span<const int> labels, double mu);

// -log(max(p_label, clamp))
double surrogate_source_term(std::span<const double> probs, std::size_t label);
// log(max(1 - p_label, clamp))
double surrogate_target_term(std::span<const double> probs, std::size_t label);

// Lower bound of the objective, reached when source and target coincide:
// gamma*log(gamma) - (1+gamma)*log(1+gamma).
double objective_floor(double gamma);

struct MddEstimate {
  double value = 0.0;
  std::size_t iteration = 0;
};

// Objective value plus its gradient with respect to the auxiliary logits
// on the source and target batches.
struct DisparityEval {
  double value = 0.0;
  double source_term = 0.0;  // E_source[log p]
  double target_term = 0.0;  // E_target[log(1 - p)]
  Tensor grad_source_logits;
  Tensor grad_target_logits;
};

DisparityEval disparity_objective(const Tensor& aux_logits_source, std::span<const int> pseudo_source,
                                  const Tensor& aux_logits_target, std::span<const int> pseudo_target,
                                  double gamma, bool with_grad = true);

// Evaluates P_j on the given batches without touching any parameters.
MddEstimate estimate_mdd(const Network& auxiliary, const Network& generator,
                         std::span<const Network> classifiers, const Tensor& source_batch,
                         const Tensor& target_batch, double gamma, std::size_t iteration = 0);

struct DomainWeights {
  std::vector<double> alpha;
};

// alpha_j = exp(-|P_j|) / sum_k exp(-|P_k|)
DomainWeights domain_weights(std::span<const double> estimates);
DomainWeights domain_weights(std::span<const MddEstimate> estimates);

// ---------------------------------------------------------------------------
// Closed-form discrete testbed.

struct DiscreteDistributionPair {
  std::vector<double> p;
  std::vector<double> q;
  double gamma = 0.1;

  void validate() const;
};

struct DiscreteOracle {
  double optimal_value = 0.0;  // gamma*sum P log D* + sum Q log(1 - D*)
  double kl_form = 0.0;        // gamma*KL(P||Z) + KL(Q||Z) + floor
  std::vector<double> discriminator;
};

// KL(p || q) over the support of p; +inf if q vanishes where p does not.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// gamma*sum P log D + sum Q log(1 - D), skipping zero-mass terms.
double discrete_objective(const DiscreteDistributionPair& pair, std::span<const double> discriminator);

DiscreteOracle discrete_mdd_oracle(const DiscreteDistributionPair& pair);

// ---------------------------------------------------------------------------
// Empirical first sum of the multi-source target-error bound.

struct BoundTerm {
  std::string domain_id;
  double alpha = 0.0;
  double margin_loss = 0.0;  // source margin loss of the ensemble scores
  double disparity = 0.0;    // E_Q[W] - E_P[W] with the auxiliary as f'
};

struct BoundReport {
  double mu = 1.0;
  std::vector<BoundTerm> terms;
  double weighted_sum = 0.0;
  std::optional<double> target_error;  // zero-one error of argmax(mean logits)
  std::vector<std::string> omitted_terms;
};

// Scores are the mean logits of the ensemble; the supremum inside the
// discrepancy is replaced by the current auxiliary classifiers, so the
// disparities are lower bounds of the true sup.
BoundReport empirical_bound_report(const ModelState& model, const DatasetBundle& bundle,
                                   std::span<const double> alpha, double mu);

std::string bound_report_json(const BoundReport& report);

}  // namespace wmdd::mdd
