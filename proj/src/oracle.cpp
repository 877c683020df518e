#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "wmdd/errors.hpp"
#include "wmdd/mdd.hpp"
#include "wmdd/sum.hpp"

namespace wmdd::mdd {

void DiscreteDistributionPair::validate() const {
  if (p.empty() || p.size() != q.size()) throw std::invalid_argument("P and Q need the same nonempty support");
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  for (const auto* dist : {&p, &q}) {
    CompensatedSum total;
    for (double v : *dist) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("probabilities must be finite and >= 0");
      total.add(v);
    }
    if (std::abs(total.value() - 1.0) > 1e-12) throw std::invalid_argument("probabilities must sum to 1");
  }
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  CompensatedSum sum;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    sum.add(p[i] * std::log(p[i] / q[i]));
  }
  return sum.value();
}

double discrete_objective(const DiscreteDistributionPair& pair, std::span<const double> discriminator) {
  if (discriminator.size() != pair.p.size()) throw std::invalid_argument("discriminator size differs from support");
  CompensatedSum sum;
  for (std::size_t i = 0; i < pair.p.size(); ++i) {
    if (pair.p[i] > 0.0) sum.add(pair.gamma * pair.p[i] * std::log(discriminator[i]));
    if (pair.q[i] > 0.0) sum.add(pair.q[i] * std::log1p(-discriminator[i]));
  }
  return sum.value();
}

DiscreteOracle discrete_mdd_oracle(const DiscreteDistributionPair& pair) {
  pair.validate();
  const double g = pair.gamma;
  const std::size_t n = pair.p.size();
  DiscreteOracle out;
  out.discriminator.assign(n, 0.5);

  CompensatedSum direct;
  std::vector<double> z(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double gp = g * pair.p[i];
    const double q = pair.q[i];
    const double mass = gp + q;
    if (mass <= 0.0) continue;
    out.discriminator[i] = gp / mass;
    if (gp > 0.0) direct.add(gp * std::log(gp / mass));
    if (q > 0.0) direct.add(q * std::log(q / mass));
    z[i] = mass / (1.0 + g);
  }
  out.optimal_value = direct.value();
  out.kl_form = g * kl_divergence(pair.p, z) + kl_divergence(pair.q, z) + objective_floor(g);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Tensor mean_logits(const EnsembleOutput& out) {
  const std::size_t k_count = out.members();
  const std::size_t batch = out.batch();
  const std::size_t classes = out.classes();
  Tensor mean({batch, classes});
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t i = 0; i < batch * classes; ++i) mean[i] += out.logits[k * batch * classes + i];
  }
  for (double& v : mean.data) v /= static_cast<double>(k_count);
  return mean;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  std::vector<int> labels(scores.dim(0));
  for (std::size_t b = 0; b < labels.size(); ++b) labels[b] = static_cast<int>(argmax(scores.row(b)));
  return labels;
}

}  // namespace

BoundReport empirical_bound_report(const ModelState& model, const DatasetBundle& bundle,
                                   std::span<const double> alpha, double mu) {
  if (alpha.size() != bundle.sources.size() || model.auxiliaries.size() != bundle.sources.size()) {
    throw std::invalid_argument("bound report: weights, auxiliaries and sources must align");
  }
  BoundReport report;
  report.mu = mu;
  report.omitted_terms = {"rademacher_complexity", "confidence_term", "beta"};

  const Tensor ft = model.generator.infer(bundle.target.windows);
  const Tensor target_scores = mean_logits(ensemble_from_features(model.classifiers, ft));
  const std::vector<int> target_pseudo = argmax_rows(target_scores);

  CompensatedSum total;
  for (std::size_t j = 0; j < bundle.sources.size(); ++j) {
    const DomainDataset& src = bundle.sources[j];
    const Tensor fs = model.generator.infer(src.windows);
    const Tensor source_scores = mean_logits(ensemble_from_features(model.classifiers, fs));
    const std::vector<int> source_pseudo = argmax_rows(source_scores);

    BoundTerm term;
    term.domain_id = src.id;
    term.alpha = alpha[j];
    term.margin_loss = margin_loss(source_scores, src.labels, mu);
    const Network& aux = model.auxiliaries[j];
    term.disparity = margin_loss(aux.infer(ft), target_pseudo, mu) - margin_loss(aux.infer(fs), source_pseudo, mu);
    total.add(term.alpha * (term.margin_loss + term.disparity));
    report.terms.push_back(term);
  }
  report.weighted_sum = total.value();

  if (!bundle.eval_labels.empty()) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < target_pseudo.size(); ++i) wrong += target_pseudo[i] != bundle.eval_labels[i];
    report.target_error = static_cast<double>(wrong) / static_cast<double>(target_pseudo.size());
  }
  return report;
}

std::string bound_report_json(const BoundReport& report) {
  nlohmann::json doc;
  doc["mu"] = report.mu;
  doc["terms"] = nlohmann::json::array();
  for (const BoundTerm& t : report.terms) {
    doc["terms"].push_back({{"domain", t.domain_id},
                            {"alpha", t.alpha},
                            {"margin_loss", t.margin_loss},
                            {"disparity", t.disparity}});
  }
  doc["weighted_sum"] = report.weighted_sum;
  doc["target_error"] = report.target_error ? nlohmann::json(*report.target_error) : nlohmann::json(nullptr);
  doc["omitted_terms"] = report.omitted_terms;
  return doc.dump(2) + "\n";
}

}  // namespace wmdd::mdd
