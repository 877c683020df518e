#include "wmdd/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "wmdd/errors.hpp"

namespace wmdd {

EnsembleOutput ensemble_from_features(std::span<const Network> classifiers, const Tensor& features) {
  if (classifiers.empty()) throw ShapeError("ensemble needs at least one classifier");
  const std::size_t k_count = classifiers.size();
  const std::size_t batch = features.dim(0);
  const std::size_t classes = classifiers.front().output_shape().at(0);
  EnsembleOutput out{Tensor({k_count, batch, classes}), Tensor({k_count, batch, classes})};
  const std::size_t slice = batch * classes;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (classifiers[k].output_shape() != Shape{classes}) {
      throw ShapeError("ensemble members disagree on class count", static_cast<int>(k));
    }
    Tensor logits = classifiers[k].infer(features);
    Tensor probs = softmax(logits);
    std::copy(logits.data.begin(), logits.data.end(), out.logits.data.begin() + static_cast<std::ptrdiff_t>(k * slice));
    std::copy(probs.data.begin(), probs.data.end(), out.probs.data.begin() + static_cast<std::ptrdiff_t>(k * slice));
  }
  return out;
}

EnsembleOutput ensemble_forward(const Network& generator, std::span<const Network> classifiers,
                                const Tensor& batch) {
  return ensemble_from_features(classifiers, generator.infer(batch));
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<int> predict_mode(const EnsembleOutput& output) {
  const std::size_t k_count = output.members();
  const std::size_t batch = output.batch();
  const std::size_t classes = output.classes();
  std::vector<int> labels(batch);
  std::vector<std::size_t> votes(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double* row = output.logits.data.data() + (k * batch + b) * classes;
      ++votes[argmax(std::span<const double>(row, classes))];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    labels[b] = static_cast<int>(best);
  }
  return labels;
}

std::vector<int> mean_prob_labels(const EnsembleOutput& output) {
  const std::size_t k_count = output.members();
  const std::size_t batch = output.batch();
  const std::size_t classes = output.classes();
  std::vector<int> labels(batch);
  std::vector<double> mean(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double* row = output.probs.data.data() + (k * batch + b) * classes;
      for (std::size_t c = 0; c < classes; ++c) mean[c] += row[c];
    }
    labels[b] = static_cast<int>(argmax(mean));
  }
  return labels;
}

namespace {

// Member mean computed as p_0 + sum_k (p_k - p_0) / K, which reproduces p_0
// exactly when every member agrees.
double member_mean(const Tensor& probs, std::size_t k_count, std::size_t stride, std::size_t offset) {
  const double p0 = probs[offset];
  double delta = 0.0;
  for (std::size_t k = 1; k < k_count; ++k) delta += probs[k * stride + offset] - p0;
  return p0 + delta / static_cast<double>(k_count);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Discrepancy classifier_discrepancy(const EnsembleOutput& output) {
  const std::size_t k_count = output.members();
  if (k_count == 1) return {0.0, true};
  const std::size_t batch = output.batch();
  const std::size_t classes = output.classes();
  const std::size_t stride = batch * classes;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double sample = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t off = b * classes + c;
      const double m = member_mean(output.probs, k_count, stride, off);
      for (std::size_t k = 0; k < k_count; ++k) sample += std::abs(output.probs[k * stride + off] - m);
    }
    total += sample;
  }
  return {total / static_cast<double>(batch), false};
}

void softmax_backward_row(std::span<const double> probs, std::span<const double> grad_probs,
                          std::span<double> grad_logits) {
  double inner = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) inner += grad_probs[c] * probs[c];
  for (std::size_t c = 0; c < probs.size(); ++c) grad_logits[c] = probs[c] * (grad_probs[c] - inner);
}

Tensor discrepancy_logit_grad(const EnsembleOutput& output) {
  const std::size_t k_count = output.members();
  const std::size_t batch = output.batch();
  const std::size_t classes = output.classes();
  const std::size_t stride = batch * classes;
  Tensor grad({k_count, batch, classes});
  if (k_count == 1) return grad;
  const double inv_b = 1.0 / static_cast<double>(batch);
  const double inv_k = 1.0 / static_cast<double>(k_count);
  Tensor grad_probs({k_count, batch, classes});
  std::vector<double> signs(k_count);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t off = b * classes + c;
      const double m = member_mean(output.probs, k_count, stride, off);
      double sign_total = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        signs[k] = sign(output.probs[k * stride + off] - m);
        sign_total += signs[k];
      }
      for (std::size_t k = 0; k < k_count; ++k) {
        grad_probs[k * stride + off] = (signs[k] - sign_total * inv_k) * inv_b;
      }
    }
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = k * stride + b * classes;
      softmax_backward_row(std::span<const double>(output.probs.data.data() + off, classes),
                           std::span<const double>(grad_probs.data.data() + off, classes),
                           std::span<double>(grad.data.data() + off, classes));
    }
  }
  return grad;
}

}  // namespace wmdd
