#include "wmdd/mdd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wmdd/errors.hpp"
#include "wmdd/sum.hpp"

namespace wmdd::mdd {

void MarginConfig::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("margin mu must be positive");
  if (!(gamma > 0.0)) throw std::invalid_argument("margin coefficient gamma must be positive");
}

double margin(std::span<const double> scores, std::size_t label) {
  if (scores.size() < 2) throw std::invalid_argument("margin needs at least 2 classes");
  if (label >= scores.size()) throw std::out_of_range("margin: label out of range");
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c != label) best_other = std::max(best_other, scores[c]);
  }
  return (scores[label] - best_other) / 2.0;
}

double ramp_loss(double v, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("ramp loss needs mu > 0");
  if (v >= mu) return 0.0;
  if (v <= 0.0) return 1.0;
  return 1.0 - v / mu;
}

double margin_loss(const Tensor& scores, std::span<const int> labels, double mu) {
  if (scores.rank() != 2 || scores.dim(0) == 0) throw ShapeError("margin_loss expects nonempty [b, C] scores");
  if (labels.size() != scores.dim(0)) throw ShapeError("margin_loss: label count differs from batch");
  CompensatedSum sum;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    sum.add(ramp_loss(margin(scores.row(b), static_cast<std::size_t>(labels[b])), mu));
  }
  return sum.value() / static_cast<double>(labels.size());
}

double surrogate_source_term(std::span<const double> probs, std::size_t label) {
  return log_prob_loss(probs, label);
}

double surrogate_target_term(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) throw std::out_of_range("surrogate_target_term: label out of range");
  return std::log(std::max(1.0 - probs[label], kProbClamp));
}

double objective_floor(double gamma) {
  return gamma * std::log(gamma) - (1.0 + gamma) * std::log1p(gamma);
}

DisparityEval disparity_objective(const Tensor& aux_logits_source, std::span<const int> pseudo_source,
                                  const Tensor& aux_logits_target, std::span<const int> pseudo_target,
                                  double gamma, bool with_grad) {
  const std::size_t ns = aux_logits_source.dim(0);
  const std::size_t nt = aux_logits_target.dim(0);
  const std::size_t classes = aux_logits_source.dim(1);
  if (ns == 0 || nt == 0) throw ShapeError("disparity objective needs nonempty batches");
  if (pseudo_source.size() != ns || pseudo_target.size() != nt) {
    throw ShapeError("disparity objective: pseudo-label count differs from batch");
  }
  const Tensor ps = softmax(aux_logits_source);
  const Tensor pt = softmax(aux_logits_target);

  DisparityEval out;
  if (with_grad) {
    out.grad_source_logits = Tensor(aux_logits_source.shape);
    out.grad_target_logits = Tensor(aux_logits_target.shape);
  }

  CompensatedSum src;
  const double ws = gamma / static_cast<double>(ns);
  for (std::size_t b = 0; b < ns; ++b) {
    const auto p = ps.row(b);
    const auto h = static_cast<std::size_t>(pseudo_source[b]);
    src.add(-surrogate_source_term(p, h));
    if (with_grad && p[h] >= kProbClamp) {
      auto g = out.grad_source_logits.row(b);
      for (std::size_t c = 0; c < classes; ++c) g[c] = ws * ((c == h ? 1.0 : 0.0) - p[c]);
    }
  }

  CompensatedSum tgt;
  const double wt = 1.0 / static_cast<double>(nt);
  for (std::size_t b = 0; b < nt; ++b) {
    const auto p = pt.row(b);
    const auto h = static_cast<std::size_t>(pseudo_target[b]);
    tgt.add(surrogate_target_term(p, h));
    if (!with_grad) continue;
    double rest = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (c != h) rest += p[c];
    }
    if (1.0 - p[h] < kProbClamp || rest <= 0.0) continue;
    auto g = out.grad_target_logits.row(b);
    // d log(1 - p_h) / dz_c = -p_h for c == h, p_h p_c / (1 - p_h) otherwise.
    for (std::size_t c = 0; c < classes; ++c) {
      g[c] = wt * (c == h ? -p[h] : p[h] * p[c] / rest);
    }
  }

  out.source_term = src.value() / static_cast<double>(ns);
  out.target_term = tgt.value() / static_cast<double>(nt);
  out.value = out.target_term + gamma * out.source_term;
  return out;
}

MddEstimate estimate_mdd(const Network& auxiliary, const Network& generator,
                         std::span<const Network> classifiers, const Tensor& source_batch,
                         const Tensor& target_batch, double gamma, std::size_t iteration) {
  if (source_batch.rank() == 0 || target_batch.rank() == 0) throw ShapeError("estimate_mdd: empty batch");
  const Tensor fs = generator.infer(source_batch);
  const Tensor ft = generator.infer(target_batch);
  const std::vector<int> hs = mean_prob_labels(ensemble_from_features(classifiers, fs));
  const std::vector<int> ht = mean_prob_labels(ensemble_from_features(classifiers, ft));
  const DisparityEval e =
      disparity_objective(auxiliary.infer(fs), hs, auxiliary.infer(ft), ht, gamma, /*with_grad=*/false);
  return {e.value, iteration};
}

DomainWeights domain_weights(std::span<const double> estimates) {
  if (estimates.empty()) throw std::invalid_argument("domain_weights needs at least one estimate");
  double lowest = std::numeric_limits<double>::infinity();
  for (double e : estimates) {
    if (!std::isfinite(e)) throw std::invalid_argument("domain_weights: non-finite estimate");
    lowest = std::min(lowest, std::abs(e));
  }
  DomainWeights w;
  w.alpha.reserve(estimates.size());
  double total = 0.0;
  for (double e : estimates) {
    w.alpha.push_back(std::exp(-(std::abs(e) - lowest)));
    total += w.alpha.back();
  }
  for (double& a : w.alpha) a /= total;
  return w;
}

DomainWeights domain_weights(std::span<const MddEstimate> estimates) {
  std::vector<double> values;
  values.reserve(estimates.size());
  for (const MddEstimate& e : estimates) values.push_back(e.value);
  return domain_weights(values);
}

}  // namespace wmdd::mdd
