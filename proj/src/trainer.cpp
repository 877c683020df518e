#include "wmdd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>

#include "wmdd/ensemble.hpp"
#include "wmdd/errors.hpp"
#include "wmdd/sum.hpp"

namespace wmdd {

void TrainConfig::validate() const {
  if (n_iter == 0) throw ConfigError("n_iter", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate", "must be positive and finite");
  }
  if (members == 0) throw ConfigError("members", "need at least one classifier");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta", "must be non-negative and finite");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma", "must be positive and finite");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("mu", "must be positive and finite");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio", "must lie in (0, 1)");
  if (eval_every == 0) throw ConfigError("eval_every", "must be positive");
  if (manifest.empty() && preset.empty()) throw ConfigError("manifest", "no dataset: set manifest or preset");
  if (arch.generator_channels.empty()) throw ConfigError("generator_channels", "must not be empty");
  if (arch.kernel_width == 0) throw ConfigError("kernel_width", "must be positive");
  for (std::size_t c : arch.generator_channels) {
    if (c == 0) throw ConfigError("generator_channels", "widths must be positive");
  }
  for (std::size_t h : arch.classifier_hidden) {
    if (h == 0) throw ConfigError("classifier_hidden", "widths must be positive");
  }
  if (manifest.empty()) {
    if (synth_classes < 2) throw ConfigError("synth_classes", "need at least two classes");
    if (synth_n_per_domain < 2) throw ConfigError("synth_n_per_domain", "need at least two samples");
    if (synth_channels == 0) throw ConfigError("synth_channels", "must be positive");
    if (synth_width == 0) throw ConfigError("synth_width", "must be positive");
  }
}

DatasetBundle resolve_dataset(const TrainConfig& config) {
  if (!config.manifest.empty()) {
    if (!std::filesystem::is_regular_file(config.manifest)) {
      throw ConfigError("manifest", "no such file: " + config.manifest);
    }
    return load_manifest(config.manifest);
  }
  SynthSpec spec;
  try {
    spec = synth_preset(config.preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("preset", e.what());
  }
  spec.classes = config.synth_classes;
  spec.n_per_domain = config.synth_n_per_domain;
  spec.channels = config.synth_channels;
  spec.width = config.synth_width;
  spec.seed = config.effective_data_seed();
  try {
    return synth_generate(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("preset", e.what());
  }
}

namespace {

// Mean -log(max(p_y, clamp)) over the batch; when `grad` is given, writes
// scale * d(mean)/d(logits) into it.
double cross_entropy(const Tensor& logits, std::span<const int> labels, double scale, Tensor* grad) {
  const std::size_t b = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (labels.size() != b) throw ShapeError("cross entropy: label count differs from batch");
  const Tensor probs = softmax(logits);
  if (grad != nullptr) *grad = Tensor(logits.shape);
  CompensatedSum total;
  const double w = scale / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto p = probs.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    total.add(log_prob_loss(p, y));
    if (grad == nullptr || p[y] < kProbClamp) continue;
    auto g = grad->row(i);
    for (std::size_t c = 0; c < classes; ++c) g[c] = w * (p[c] - (c == y ? 1.0 : 0.0));
  }
  return total.value() / static_cast<double>(b);
}

struct Fingerprints {
  std::uint64_t generator = 0;
  std::vector<std::uint64_t> classifiers;
  std::vector<std::uint64_t> auxiliaries;
};

Fingerprints fingerprints(const ModelState& state) {
  Fingerprints f;
  f.generator = state.generator.fingerprint();
  for (const Network& c : state.classifiers) f.classifiers.push_back(c.fingerprint());
  for (const Network& a : state.auxiliaries) f.auxiliaries.push_back(a.fingerprint());
  return f;
}

struct Writable {
  bool generator = false;
  bool classifiers = false;
  std::optional<std::size_t> auxiliary;
};

void check_frozen(const Fingerprints& before, const ModelState& state, const Writable& writable,
                  const char* step) {
  const Fingerprints after = fingerprints(state);
  auto fail = [&](const std::string& what) {
    throw std::logic_error(std::string(step) + " modified frozen " + what);
  };
  if (!writable.generator && after.generator != before.generator) fail("generator");
  if (!writable.classifiers && after.classifiers != before.classifiers) fail("classifiers");
  for (std::size_t j = 0; j < after.auxiliaries.size(); ++j) {
    if (writable.auxiliary != j && after.auxiliaries[j] != before.auxiliaries[j]) {
      fail("auxiliary " + std::to_string(j));
    }
  }
}

void check_alpha(std::span<const double> alpha, std::size_t sources) {
  if (alpha.size() != sources) throw ShapeError("source weights: count differs from source batches");
}

Tensor slice_member(const Tensor& stacked, std::size_t k) {
  const std::size_t b = stacked.dim(1);
  const std::size_t classes = stacked.dim(2);
  Tensor out({b, classes});
  const auto src = std::span<const double>(stacked.data).subspan(k * b * classes, b * classes);
  std::copy(src.begin(), src.end(), out.data.begin());
  return out;
}

// Stacks per-member logits [b, C] into an ensemble output.
EnsembleOutput stack_members(const std::vector<ForwardResult>& runs) {
  const std::size_t members = runs.size();
  const std::size_t b = runs.front().output.dim(0);
  const std::size_t classes = runs.front().output.dim(1);
  const auto stride = static_cast<std::ptrdiff_t>(b * classes);
  EnsembleOutput ens{Tensor({members, b, classes}), Tensor({members, b, classes})};
  for (std::size_t k = 0; k < members; ++k) {
    const Tensor p = softmax(runs[k].output);
    const auto offset = static_cast<std::ptrdiff_t>(k) * stride;
    std::copy(runs[k].output.data.begin(), runs[k].output.data.end(), ens.logits.data.begin() + offset);
    std::copy(p.data.begin(), p.data.end(), ens.probs.data.begin() + offset);
  }
  return ens;
}

Batch whole(const DomainDataset& d) {
  Batch b;
  b.inputs = d.windows;
  b.labels = d.labels;
  b.indices.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) b.indices[i] = i;
  b.domain_id = d.id;
  return b;
}

}  // namespace

AuxObjective aux_objective(const ModelState& state, std::size_t source, const Tensor& source_batch,
                           const Tensor& target_batch, double gamma) {
  const Network& aux = state.auxiliaries.at(source);
  const Tensor fs = state.generator.infer(source_batch);
  const Tensor ft = state.generator.infer(target_batch);
  const std::vector<int> hs = mean_prob_labels(ensemble_from_features(state.classifiers, fs));
  const std::vector<int> ht = mean_prob_labels(ensemble_from_features(state.classifiers, ft));

  ForwardResult as = aux.forward(fs);
  ForwardResult at = aux.forward(ft);
  const mdd::DisparityEval e = mdd::disparity_objective(as.output, hs, at.output, ht, gamma);

  AuxObjective out;
  out.objective = e.value;
  out.grads = aux.backward(as.tape, e.grad_source_logits);
  out.grads.input = Tensor();
  Gradients gt = aux.backward(at.tape, e.grad_target_logits);
  gt.input = Tensor();
  out.grads.add(gt);
  out.grads.scale(-1.0);
  return out;
}

MainObjective main_objective(const ModelState& state, std::span<const double> alpha,
                             std::span<const Batch> sources, const Batch& target, double gamma,
                             bool use_disparity, bool with_grad) {
  check_alpha(alpha, sources.size());
  if (use_disparity && sources.size() != state.auxiliaries.size()) {
    throw ShapeError("main step: one source batch per auxiliary required");
  }
  const std::size_t members = state.classifiers.size();
  const double inv_k = 1.0 / static_cast<double>(members);

  MainObjective out;
  if (with_grad) {
    out.generator = state.generator.zero_gradients();
    for (const Network& c : state.classifiers) out.classifiers.push_back(c.zero_gradients());
  }

  Tensor grad_target_features;
  ForwardResult gt;
  std::vector<int> target_pseudo;
  if (use_disparity) {
    gt = state.generator.forward(target.inputs);
    target_pseudo = mean_prob_labels(ensemble_from_features(state.classifiers, gt.output));
    if (with_grad) grad_target_features = Tensor(gt.output.shape);
  }

  CompensatedSum source_loss;
  CompensatedSum disparity_loss;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const Batch& batch = sources[j];
    const ForwardResult gs = state.generator.forward(batch.inputs);
    Tensor grad_features(gs.output.shape);

    std::vector<ForwardResult> runs;
    runs.reserve(members);
    for (std::size_t k = 0; k < members; ++k) {
      const Network& cls = state.classifiers[k];
      runs.push_back(cls.forward(gs.output));
      Tensor grad_logits;
      const double ce =
          cross_entropy(runs[k].output, batch.labels, alpha[j] * inv_k, with_grad ? &grad_logits : nullptr);
      source_loss.add(alpha[j] * inv_k * ce);
      if (with_grad) {
        Gradients g = cls.backward(runs[k].tape, grad_logits);
        for (std::size_t i = 0; i < g.input.data.size(); ++i) grad_features.data[i] += g.input.data[i];
        g.input = Tensor();
        out.classifiers[k].add(g);
      }
    }

    if (use_disparity) {
      const std::vector<int> source_pseudo = mean_prob_labels(stack_members(runs));
      const Network& aux = state.auxiliaries[j];
      ForwardResult as = aux.forward(gs.output);
      ForwardResult at = aux.forward(gt.output);
      mdd::DisparityEval e = mdd::disparity_objective(as.output, source_pseudo, at.output, target_pseudo, gamma,
                                                      with_grad);
      disparity_loss.add(alpha[j] * e.value);
      if (with_grad) {
        for (double& v : e.grad_source_logits.data) v *= alpha[j];
        for (double& v : e.grad_target_logits.data) v *= alpha[j];
        const Gradients ds = aux.backward(as.tape, e.grad_source_logits);
        const Gradients dt = aux.backward(at.tape, e.grad_target_logits);
        for (std::size_t i = 0; i < ds.input.data.size(); ++i) grad_features.data[i] += ds.input.data[i];
        for (std::size_t i = 0; i < dt.input.data.size(); ++i) grad_target_features.data[i] += dt.input.data[i];
      }
    }

    if (with_grad) {
      Gradients g = state.generator.backward(gs.tape, grad_features);
      g.input = Tensor();
      out.generator.add(g);
    }
  }

  if (use_disparity && with_grad) {
    Gradients g = state.generator.backward(gt.tape, grad_target_features);
    g.input = Tensor();
    out.generator.add(g);
  }

  out.source_loss = source_loss.value();
  out.disparity_loss = disparity_loss.value();
  out.total = out.source_loss + out.disparity_loss;
  return out;
}

MaxDiscObjective maxdisc_objective(const ModelState& state, std::span<const Batch> sources,
                                   const Batch& target, std::span<const double> alpha, double eta,
                                   bool with_grad) {
  check_alpha(alpha, sources.size());
  const std::size_t members = state.classifiers.size();
  const double inv_k = 1.0 / static_cast<double>(members);

  MaxDiscObjective out;
  if (with_grad) {
    for (const Network& c : state.classifiers) out.classifiers.push_back(c.zero_gradients());
  }

  CompensatedSum source_loss;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const Tensor fs = state.generator.infer(sources[j].inputs);
    for (std::size_t k = 0; k < members; ++k) {
      const Network& cls = state.classifiers[k];
      ForwardResult cf = cls.forward(fs);
      Tensor grad_logits;
      const double ce =
          cross_entropy(cf.output, sources[j].labels, alpha[j] * inv_k, with_grad ? &grad_logits : nullptr);
      source_loss.add(alpha[j] * inv_k * ce);
      if (with_grad) {
        Gradients g = cls.backward(cf.tape, grad_logits);
        g.input = Tensor();
        out.classifiers[k].add(g);
      }
    }
  }

  const Tensor ft = state.generator.infer(target.inputs);
  std::vector<ForwardResult> runs;
  runs.reserve(members);
  for (const Network& cls : state.classifiers) runs.push_back(cls.forward(ft));
  const EnsembleOutput ens = stack_members(runs);
  out.discrepancy = classifier_discrepancy(ens).value;
  if (with_grad && eta != 0.0) {
    Tensor grad = discrepancy_logit_grad(ens);
    for (double& v : grad.data) v *= -eta;
    for (std::size_t k = 0; k < members; ++k) {
      Gradients g = state.classifiers[k].backward(runs[k].tape, slice_member(grad, k));
      g.input = Tensor();
      out.classifiers[k].add(g);
    }
  }

  out.source_loss = source_loss.value();
  out.total = out.source_loss - eta * out.discrepancy;
  return out;
}

MinDiscObjective mindisc_objective(const ModelState& state, const Batch& target, bool with_grad) {
  const std::size_t members = state.classifiers.size();
  ForwardResult gt = state.generator.forward(target.inputs);
  std::vector<ForwardResult> runs;
  runs.reserve(members);
  for (const Network& cls : state.classifiers) runs.push_back(cls.forward(gt.output));
  const EnsembleOutput ens = stack_members(runs);

  MinDiscObjective out;
  out.discrepancy = classifier_discrepancy(ens).value;
  if (!with_grad) return out;

  const Tensor grad = discrepancy_logit_grad(ens);
  Tensor grad_features(gt.output.shape);
  for (std::size_t k = 0; k < members; ++k) {
    const Gradients g = state.classifiers[k].backward(runs[k].tape, slice_member(grad, k));
    for (std::size_t i = 0; i < g.input.data.size(); ++i) grad_features.data[i] += g.input.data[i];
  }
  out.generator = state.generator.backward(gt.tape, grad_features);
  out.generator.input = Tensor();
  return out;
}

double step_aux(ModelState& state, std::size_t source, const Batch& source_batch, const Batch& target_batch,
                double gamma, bool verify) {
  const Fingerprints before = verify ? fingerprints(state) : Fingerprints{};
  AuxObjective obj = aux_objective(state, source, source_batch.inputs, target_batch.inputs, gamma);
  state.auxiliary_opts.at(source).step(state.auxiliaries[source], obj.grads);
  if (verify) check_frozen(before, state, Writable{false, false, source}, "auxiliary step");
  return obj.objective;
}

mdd::DomainWeights weights_from_estimates(std::span<const double> estimates, double gamma, bool use_weights,
                                          bool center) {
  if (!use_weights) return {std::vector<double>(estimates.size(), 1.0 / static_cast<double>(estimates.size()))};
  if (!center) return mdd::domain_weights(estimates);
  // A constant discriminator already attains the floor, so an estimate
  // below it only means the auxiliary lags; its excess is taken as 0.
  std::vector<double> excess;
  for (double e : estimates) excess.push_back(std::max(0.0, e - mdd::objective_floor(gamma)));
  return mdd::domain_weights(excess);
}

WeightStep compute_weights(const ModelState& state, std::span<const Batch> sources, const Batch& target,
                           double gamma, bool use_weights, bool center, std::size_t iteration) {
  if (sources.size() != state.auxiliaries.size()) {
    throw ShapeError("compute_weights: one source batch per auxiliary required");
  }
  WeightStep out;
  // Shared work: target features and pseudo-labels are the same for every source.
  const Tensor ft = state.generator.infer(target.inputs);
  const std::vector<int> ht = mean_prob_labels(ensemble_from_features(state.classifiers, ft));
  std::vector<double> values;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const Tensor fs = state.generator.infer(sources[j].inputs);
    const std::vector<int> hs = mean_prob_labels(ensemble_from_features(state.classifiers, fs));
    const Network& aux = state.auxiliaries[j];
    const mdd::DisparityEval e =
        mdd::disparity_objective(aux.infer(fs), hs, aux.infer(ft), ht, gamma, /*with_grad=*/false);
    out.estimates.push_back({e.value, iteration});
    values.push_back(e.value);
  }
  out.weights = weights_from_estimates(values, gamma, use_weights, center);
  return out;
}

std::vector<double> refined_estimates(const ModelState& state, std::span<const Batch> sources, const Batch& target,
                                      double gamma, std::size_t steps) {
  if (sources.size() != state.auxiliaries.size()) {
    throw ShapeError("refined_estimates: one source batch per auxiliary required");
  }
  const Tensor ft = state.generator.infer(target.inputs);
  const std::vector<int> ht = mean_prob_labels(ensemble_from_features(state.classifiers, ft));
  std::vector<double> out;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const Tensor fs = state.generator.infer(sources[j].inputs);
    const std::vector<int> hs = mean_prob_labels(ensemble_from_features(state.classifiers, fs));
    Network aux = state.auxiliaries[j];
    AdamState opt = state.auxiliary_opts[j];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t step = 0;; ++step) {
      ForwardResult as = aux.forward(fs);
      ForwardResult at = aux.forward(ft);
      const mdd::DisparityEval e = mdd::disparity_objective(as.output, hs, at.output, ht, gamma, step < steps);
      best = std::max(best, e.value);
      if (step == steps) break;
      Gradients g = aux.backward(as.tape, e.grad_source_logits);
      g.input = Tensor();
      Gradients gt = aux.backward(at.tape, e.grad_target_logits);
      gt.input = Tensor();
      g.add(gt);
      g.scale(-1.0);
      opt.step(aux, g);
    }
    out.push_back(best);
  }
  return out;
}

MainObjective step_main(ModelState& state, std::span<const double> alpha, std::span<const Batch> sources,
                        const Batch& target, double gamma, bool use_disparity, bool verify) {
  const Fingerprints before = verify ? fingerprints(state) : Fingerprints{};
  MainObjective obj = main_objective(state, alpha, sources, target, gamma, use_disparity);
  state.generator_opt.step(state.generator, obj.generator);
  for (std::size_t k = 0; k < state.classifiers.size(); ++k) {
    state.classifier_opts[k].step(state.classifiers[k], obj.classifiers[k]);
  }
  if (verify) check_frozen(before, state, Writable{true, true, std::nullopt}, "main step");
  return obj;
}

MaxDiscObjective step_maxdisc(ModelState& state, std::span<const Batch> sources, const Batch& target,
                              std::span<const double> alpha, double eta, bool verify) {
  const Fingerprints before = verify ? fingerprints(state) : Fingerprints{};
  MaxDiscObjective obj = maxdisc_objective(state, sources, target, alpha, eta);
  for (std::size_t k = 0; k < state.classifiers.size(); ++k) {
    state.classifier_opts[k].step(state.classifiers[k], obj.classifiers[k]);
  }
  if (verify) check_frozen(before, state, Writable{false, true, std::nullopt}, "discrepancy-maximizing step");
  return obj;
}

double step_mindisc(ModelState& state, const Batch& target, bool verify) {
  const Fingerprints before = verify ? fingerprints(state) : Fingerprints{};
  MinDiscObjective obj = mindisc_objective(state, target);
  state.generator_opt.step(state.generator, obj.generator);
  if (verify) check_frozen(before, state, Writable{true, false, std::nullopt}, "discrepancy-minimizing step");
  return obj.discrepancy;
}

double evaluate(const ModelState& state, const Tensor& windows, std::span<const int> labels) {
  if (labels.empty()) throw DataError("evaluation needs target labels");
  const std::size_t n = windows.dim(0);
  if (labels.size() != n) throw DataError("evaluation labels do not match the number of windows");
  constexpr std::size_t chunk = 1024;
  const std::size_t row = windows.row_size();
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    Shape shape = windows.shape;
    shape[0] = len;
    Tensor part(shape);
    std::copy(windows.data.begin() + static_cast<std::ptrdiff_t>(start * row),
              windows.data.begin() + static_cast<std::ptrdiff_t>((start + len) * row), part.data.begin());
    const std::vector<int> votes = predict_mode(ensemble_forward(state.generator, state.classifiers, part));
    for (std::size_t i = 0; i < len; ++i) correct += votes[i] == labels[start + i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

TrainResult train(const TrainConfig& config) {
  config.validate();
  return train(config, resolve_dataset(config));
}

TrainResult train(const TrainConfig& config, const DatasetBundle& bundle) {
  config.validate();
  bundle.validate();
  const std::size_t n_sources = bundle.sources.size();

  // Every domain is split; training sees only the train parts, evaluation
  // only the held-out part of the target.
  std::mt19937_64 seeder(config.seed ^ 0x5eed5eed5eed5eedULL);
  DatasetBundle train_bundle;
  DatasetBundle test_bundle;
  train_bundle.class_count = test_bundle.class_count = bundle.class_count;
  train_bundle.source_shifts = test_bundle.source_shifts = bundle.source_shifts;
  train_bundle.target_shift = test_bundle.target_shift = bundle.target_shift;
  for (const DomainDataset& d : bundle.sources) {
    auto [tr, te] = split(d, config.train_ratio, seeder());
    train_bundle.sources.push_back(std::move(tr));
    test_bundle.sources.push_back(std::move(te));
  }
  const SplitIndices target_split = split_indices(bundle.target.size(), config.train_ratio, seeder());
  train_bundle.target = subset(bundle.target, target_split.train);
  test_bundle.target = subset(bundle.target, target_split.test);
  if (!bundle.eval_labels.empty()) {
    for (std::size_t i : target_split.test) test_bundle.eval_labels.push_back(bundle.eval_labels[i]);
  }

  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  TrainResult result{ModelState::create(bundle.channels(), bundle.width(), bundle.class_count, n_sources,
                                        config.members, config.arch, adam, seeder()),
                     {}, std::move(train_bundle), std::move(test_bundle)};
  ModelState& state = result.model;
  TrainReport& report = result.report;
  for (const DomainDataset& d : bundle.sources) report.source_ids.push_back(d.id);

  std::vector<BatchIterator> source_iters;
  for (const DomainDataset& d : result.train_bundle.sources) {
    source_iters.emplace_back(d, config.batch_size, seeder());
  }
  BatchIterator target_iter(result.train_bundle.target, config.batch_size, seeder());

  const bool evaluable = !result.test_bundle.eval_labels.empty();
  const std::size_t checks_per_iter =
      (config.use_disparity ? n_sources : 0) + 1 + (config.use_adversary ? 2 : 0);
  std::vector<double> alpha(n_sources, 1.0 / static_cast<double>(n_sources));
  std::vector<double> estimates(n_sources, 0.0);

  for (std::size_t iter = 1; iter <= config.n_iter; ++iter) {
    std::vector<Batch> sources;
    sources.reserve(n_sources);
    for (BatchIterator& it : source_iters) sources.push_back(it.next());
    const Batch target = target_iter.next();

    if (config.use_disparity) {
      for (std::size_t j = 0; j < n_sources; ++j) {
        step_aux(state, j, sources[j], target, config.gamma, config.verify_freeze);
        ++report.steps.aux;
      }
      WeightStep w = compute_weights(state, sources, target, config.gamma, config.use_weights,
                                     config.center_weights, iter);
      ++report.steps.weights;
      alpha = w.weights.alpha;
      for (std::size_t j = 0; j < n_sources; ++j) estimates[j] = w.estimates[j].value;
    }

    const MainObjective main =
        step_main(state, alpha, sources, target, config.gamma, config.use_disparity, config.verify_freeze);
    ++report.steps.main;

    double discrepancy = 0.0;
    if (config.use_adversary) {
      step_maxdisc(state, sources, target, alpha, config.eta, config.verify_freeze);
      ++report.steps.maxdisc;
      discrepancy = step_mindisc(state, target, config.verify_freeze);
      ++report.steps.mindisc;
    } else {
      discrepancy = classifier_discrepancy(ensemble_forward(state.generator, state.classifiers, target.inputs)).value;
    }
    if (config.verify_freeze) report.steps.freeze_checks += checks_per_iter;

    ReportRow row;
    row.iteration = iter;
    row.mdd = estimates;
    row.alpha = alpha;
    row.source_loss = main.source_loss;
    row.disparity_loss = main.disparity_loss;
    row.discrepancy = discrepancy;
    if (evaluable && (iter % config.eval_every == 0 || iter == config.n_iter)) {
      row.target_accuracy =
          evaluate(state, result.test_bundle.target.windows, result.test_bundle.eval_labels);
    }
    report.rows.push_back(std::move(row));
  }

  // Final summary over the whole training splits. The discrepancy is a
  // supremum over discriminators, so copies of the auxiliaries keep ascending
  // on the frozen final features first; the model itself is not touched.
  if (config.use_disparity) {
    std::vector<Batch> full_sources;
    for (const DomainDataset& d : result.train_bundle.sources) full_sources.push_back(whole(d));
    report.final_mdd = refined_estimates(state, full_sources, whole(result.train_bundle.target), config.gamma,
                                         config.final_refine_steps);
    report.final_alpha =
        weights_from_estimates(report.final_mdd, config.gamma, config.use_weights, config.center_weights).alpha;
  } else {
    report.final_alpha = alpha;
    report.final_mdd = estimates;
  }
  report.final_accuracy = report.rows.back().target_accuracy;
  return result;
}

}  // namespace wmdd
