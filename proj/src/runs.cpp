#include "wmdd/runs.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include "wmdd/config.hpp"
#include "wmdd/ensemble.hpp"
#include "wmdd/errors.hpp"
#include "wmdd/gradcheck.hpp"
#include "wmdd/io.hpp"
#include "wmdd/mdd.hpp"
#include "wmdd/model.hpp"

namespace wmdd::cli {

namespace fs = std::filesystem;

std::filesystem::path default_output_root() {
  if (const char* root = std::getenv("WMDD_OUT_ROOT"); root != nullptr && *root != '\0') return root;
  return "runs";
}

std::string metrics_csv(const TrainReport& report) {
  const std::size_t n = report.source_ids.size();
  std::string out = "iter";
  for (std::size_t j = 1; j <= n; ++j) out += ",mdd_src_" + std::to_string(j);
  for (std::size_t j = 1; j <= n; ++j) out += ",alpha_" + std::to_string(j);
  out += ",loss_src,loss_disp,discrepancy,target_acc\n";
  for (const ReportRow& row : report.rows) {
    out += std::to_string(row.iteration);
    for (double v : row.mdd) out += "," + io::format_double(v);
    for (double v : row.alpha) out += "," + io::format_double(v);
    out += "," + io::format_double(row.source_loss);
    out += "," + io::format_double(row.disparity_loss);
    out += "," + io::format_double(row.discrepancy);
    out += ",";
    if (row.target_accuracy) out += io::format_double(*row.target_accuracy);
    out += "\n";
  }
  return out;
}

MetricsTable parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("metrics: empty file");
  const auto header = io::split_fields(line);
  if (header.size() < 6 || (header.size() - 5) % 2 != 0) throw DataError("metrics: malformed header");
  MetricsTable table;
  table.sources = (header.size() - 5) / 2;
  TrainReport expected;
  expected.source_ids.resize(table.sources);
  if (line + "\n" != metrics_csv(expected)) throw DataError("metrics: unexpected header '" + line + "'");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = io::split_fields(line);
    const std::string where = "metrics line " + std::to_string(line_no);
    if (fields.size() != header.size()) throw DataError(where + ": wrong field count");
    ReportRow row;
    long long iter = 0;
    if (!io::parse_int(fields[0], iter) || iter <= 0) throw DataError(where + ": bad iter");
    row.iteration = static_cast<std::size_t>(iter);
    auto number = [&](std::size_t i) {
      double v = 0.0;
      if (!io::parse_double(fields[i], v)) throw DataError(where + ": bad number in column " + std::to_string(i));
      return v;
    };
    for (std::size_t j = 0; j < table.sources; ++j) row.mdd.push_back(number(1 + j));
    for (std::size_t j = 0; j < table.sources; ++j) row.alpha.push_back(number(1 + table.sources + j));
    const std::size_t base = 1 + 2 * table.sources;
    row.source_loss = number(base);
    row.disparity_loss = number(base + 1);
    row.discrepancy = number(base + 2);
    if (!fields[base + 3].empty()) {
      const double acc = number(base + 3);
      if (acc < 0.0 || acc > 1.0) throw DataError(where + ": accuracy outside [0, 1]");
      row.target_accuracy = acc;
    }
    double total = 0.0;
    for (double a : row.alpha) {
      if (a < 0.0) throw DataError(where + ": negative weight");
      total += a;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DataError(where + ": weights do not sum to 1");
    if (row.iteration != table.rows.size() + 1) {
      throw DataError(where + ": expected iteration " + std::to_string(table.rows.size() + 1));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string summary_json(const TrainReport& report) {
  nlohmann::json doc;
  doc["source_ids"] = report.source_ids;
  doc["final_alpha"] = report.final_alpha;
  doc["final_mdd"] = report.final_mdd;
  doc["final_accuracy"] = report.final_accuracy ? nlohmann::json(*report.final_accuracy) : nlohmann::json(nullptr);
  doc["steps"] = {{"aux", report.steps.aux},
                  {"weights", report.steps.weights},
                  {"main", report.steps.main},
                  {"maxdisc", report.steps.maxdisc},
                  {"mindisc", report.steps.mindisc},
                  {"freeze_checks", report.steps.freeze_checks}};
  return doc.dump(2) + "\n";
}

RunArtifacts cmd_train(const TrainConfig& config, const fs::path& out_dir) {
  config.validate();
  const DatasetBundle bundle = resolve_dataset(config);
  fs::create_directories(out_dir);

  RunArtifacts art;
  art.dir = out_dir;
  art.config_snapshot = out_dir / "config.json";
  art.metrics = out_dir / "metrics.csv";
  art.model = out_dir / "model.json";
  art.bound_report = out_dir / "bound_report.json";
  art.summary = out_dir / "summary.json";
  // The snapshot goes first so a failed run still records what was attempted.
  io::write_atomic(art.config_snapshot, config_to_json(config));

  TrainResult result = train(config, bundle);
  io::write_atomic(art.metrics, metrics_csv(result.report));
  io::write_atomic(art.model, export_model(result.model));
  const mdd::BoundReport bound =
      mdd::empirical_bound_report(result.model, result.test_bundle, result.report.final_alpha, config.mu);
  io::write_atomic(art.bound_report, mdd::bound_report_json(bound));
  io::write_atomic(art.summary, summary_json(result.report));
  art.report = std::move(result.report);
  return art;
}

std::vector<std::uint64_t> battery_seeds(const TrainConfig& config) {
  if (config.seeds.empty()) return {config.seed};
  return config.seeds;
}

namespace {

void summarize(ArmSummary& arm) {
  const auto n = static_cast<double>(arm.accuracies.size());
  double sum = 0.0;
  for (double a : arm.accuracies) sum += a;
  arm.mean = sum / n;
  double ss = 0.0;
  for (double a : arm.accuracies) ss += (a - arm.mean) * (a - arm.mean);
  arm.stddev = arm.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

ArmSummary run_arm(const TrainConfig& base, const std::string& name, const std::string& parameter,
                   const fs::path& dir) {
  ArmSummary arm;
  arm.name = name;
  arm.parameter = parameter;
  for (std::uint64_t seed : battery_seeds(base)) {
    TrainConfig c = base;
    c.seed = seed;
    c.seeds.clear();
    const RunArtifacts art = cmd_train(c, dir / ("seed_" + std::to_string(seed)));
    if (!art.report.final_accuracy) {
      throw DataError("battery runs need target evaluation labels");
    }
    arm.seeds.push_back(seed);
    arm.accuracies.push_back(*art.report.final_accuracy);
    double mdd_sum = 0.0;
    for (double m : art.report.final_mdd) mdd_sum += std::abs(m);
    arm.final_mean_abs_mdd.push_back(mdd_sum / static_cast<double>(art.report.final_mdd.size()));
    arm.metrics.push_back(art.metrics);
  }
  summarize(arm);
  return arm;
}

std::string summary_csv(const std::vector<ArmSummary>& arms, const std::string& first_column) {
  std::string out = first_column + ",seeds,mean_acc,std_acc,mean_abs_mdd\n";
  for (const ArmSummary& arm : arms) {
    double mdd = 0.0;
    for (double m : arm.final_mean_abs_mdd) mdd += m;
    mdd /= static_cast<double>(arm.final_mean_abs_mdd.size());
    out += arm.parameter + "," + std::to_string(arm.seeds.size()) + "," + io::format_double(arm.mean) + "," +
           io::format_double(arm.stddev) + "," + io::format_double(mdd) + "\n";
  }
  return out;
}

}  // namespace

BatteryResult cmd_ablate(const TrainConfig& config, const fs::path& out_dir) {
  config.validate();
  struct Arm {
    const char* name;
    bool weights;
    bool adversary;
  };
  constexpr Arm arms[] = {{"full", true, true}, {"No-W", false, true}, {"No-A", true, false}, {"No-W-A", false, false}};
  BatteryResult result;
  for (const Arm& a : arms) {
    TrainConfig c = config;
    c.use_weights = a.weights;
    c.use_adversary = a.adversary;
    result.arms.push_back(run_arm(c, a.name, a.name, out_dir / a.name));
  }
  result.summary = out_dir / "summary.csv";
  io::write_atomic(result.summary, summary_csv(result.arms, "arm"));
  return result;
}

BatteryResult cmd_sweep(const TrainConfig& config, const std::string& parameter, const std::vector<double>& values,
                        const fs::path& out_dir) {
  config.validate();
  if (parameter != "gamma" && parameter != "K" && parameter != "eta") {
    throw ConfigError("param", "unknown sweep parameter '" + parameter + "' (expected gamma, K or eta)");
  }
  if (values.empty()) throw ConfigError("values", "need at least one value");
  BatteryResult result;
  for (double v : values) {
    TrainConfig c = config;
    if (parameter == "gamma") {
      c.gamma = v;
    } else if (parameter == "eta") {
      c.eta = v;
    } else {
      if (v < 1.0 || v != std::floor(v)) throw ConfigError("values", "K must be a positive integer");
      c.members = static_cast<std::size_t>(v);
    }
    c.validate();
    const std::string label = io::format_double(v);
    result.arms.push_back(run_arm(c, parameter + "=" + label, label, out_dir / (parameter + "_" + label)));
  }
  result.summary = out_dir / "summary.csv";
  io::write_atomic(result.summary, summary_csv(result.arms, parameter));
  return result;
}

std::vector<double> parse_value_list(const std::string& text) {
  std::vector<double> out;
  for (std::string_view f : io::split_fields(text)) {
    double v = 0.0;
    if (!io::parse_double(f, v)) throw ConfigError("values", "not a number: '" + std::string(f) + "'");
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle suites.

namespace {

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string join(std::span<const double> v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + io::format_double(v[i]);
  return out + "]";
}

// Random point of the simplex with occasional exact zeros; never all zero.
std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> draw(1.0);
  std::bernoulli_distribution drop(0.15);
  std::vector<double> p(n);
  double total = 0.0;
  for (double& v : p) {
    v = drop(rng) ? 0.0 : draw(rng);
    total += v;
  }
  if (total == 0.0) {
    p[0] = 1.0;
    total = 1.0;
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

OracleCheck oracle_theorem4(std::size_t cases, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  OracleCheck check;
  check.name = "theorem4";
  check.cases = cases;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> support(1, 16);
  std::uniform_real_distribution<double> log_gamma(std::log(0.01), std::log(10.0));
  for (std::size_t i = 0; i < cases; ++i) {
    mdd::DiscreteDistributionPair pair;
    const std::size_t n = support(rng);
    pair.p = random_distribution(n, rng);
    pair.q = random_distribution(n, rng);
    pair.gamma = std::exp(log_gamma(rng));
    const mdd::DiscreteOracle o = mdd::discrete_mdd_oracle(pair);
    const double err = std::abs(o.optimal_value - o.kl_form);
    check.max_error = std::max(check.max_error, err);
    if (err <= 1e-9) {
      ++check.passes;
    } else if (!check.counterexample) {
      check.counterexample = "P=" + join(pair.p) + " Q=" + join(pair.q) + " gamma=" + io::format_double(pair.gamma) +
                             ": " + io::format_double(o.optimal_value) + " vs " + io::format_double(o.kl_form);
    }
  }
  // Aligned-domain anchor: 0.1 ln 0.1 - 1.1 ln 1.1.
  const mdd::DiscreteOracle anchor = mdd::discrete_mdd_oracle({{0.25, 0.25, 0.5}, {0.25, 0.25, 0.5}, 0.1});
  if (std::abs(anchor.optimal_value - (-0.3350997)) > 1e-6 && !check.counterexample) {
    check.counterexample = "P=Q, gamma=0.1 gave " + io::format_double(anchor.optimal_value);
  }
  check.seconds = elapsed_since(start);
  return check;
}

OracleCheck oracle_proposition1(std::size_t cases, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  OracleCheck check;
  check.name = "proposition1";
  check.cases = cases;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> class_count(2, 6);
  std::normal_distribution<double> score(0.0, 2.0);
  std::uniform_real_distribution<double> mu_draw(0.05, 3.0);
  std::bernoulli_distribution tie(0.1);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t c = class_count(rng);
    std::vector<double> f(c);
    std::vector<double> g(c);
    for (double& v : f) v = score(rng);
    for (double& v : g) v = score(rng);
    if (tie(rng)) f[1] = f[0];
    if (tie(rng)) g[1] = g[0];
    const std::size_t y = std::uniform_int_distribution<std::size_t>(0, c - 1)(rng);
    const double mu = mu_draw(rng);
    const std::size_t h = argmax(f);
    const double lhs = mdd::ramp_loss(mdd::margin(g, h), mu);
    const double rhs = mdd::ramp_loss(mdd::margin(f, y), mu) + mdd::ramp_loss(mdd::margin(g, y), mu);
    check.max_error = std::max(check.max_error, lhs - rhs);
    if (lhs <= rhs) {
      ++check.passes;
    } else if (!check.counterexample) {
      check.counterexample = "f=" + join(f) + " f'=" + join(g) + " y=" + std::to_string(y) +
                             " mu=" + io::format_double(mu);
    }
  }
  check.seconds = elapsed_since(start);
  return check;
}

OracleCheck oracle_gradcheck(std::size_t points, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  OracleCheck check;
  check.name = "gradcheck";
  check.cases = points;
  // Generator (3 conv + pool) and classifier (3 dense) as one stack.
  const std::size_t channels = 2;
  const std::size_t width = 12;
  const std::vector<std::size_t> conv{3, 4, 4};
  const std::vector<std::size_t> hidden{6, 6};
  std::vector<LayerSpec> specs = generator_specs(channels, width, conv, 3);
  const std::vector<LayerSpec> head = classifier_specs(conv.back(), hidden, 3);
  specs.insert(specs.end(), head.begin(), head.end());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < points; ++i) {
    const Network net(specs, rng());
    Tensor point({2, channels, width});
    for (double& v : point.data) v = normal(rng);
    GradCheckOptions opts;
    opts.seed = rng();
    const GradCheckReport r = grad_check(net, point, opts);
    check.max_error = std::max(check.max_error, r.max_relative_error);
    if (r.max_relative_error < 1e-5) {
      ++check.passes;
    } else if (!check.counterexample) {
      check.counterexample = "point " + std::to_string(i) + ": relative error " +
                             io::format_double(r.max_relative_error) + " at " + r.worst;
    }
  }
  check.seconds = elapsed_since(start);
  return check;
}

std::vector<OracleCheck> cmd_oracle(const std::string& check) {
  if (check == "theorem4") return {oracle_theorem4()};
  if (check == "proposition1") return {oracle_proposition1()};
  if (check == "gradcheck") return {oracle_gradcheck()};
  if (check == "all") return {oracle_theorem4(), oracle_proposition1(), oracle_gradcheck()};
  throw ConfigError("check", "unknown oracle check '" + check + "' (expected theorem4, proposition1, gradcheck or all)");
}

// ---------------------------------------------------------------------------

fs::path cmd_export_embeddings(const fs::path& model_path, const TrainConfig& config, const fs::path& out_path) {
  const ModelState model = import_model(io::read_file(model_path));
  const DatasetBundle bundle = resolve_dataset(config);
  if (bundle.sources.size() != model.auxiliaries.size()) {
    throw ShapeError("model has " + std::to_string(model.auxiliaries.size()) + " auxiliaries but the dataset has " +
                     std::to_string(bundle.sources.size()) + " sources");
  }
  if (Shape{bundle.channels(), bundle.width()} != model.generator.input_shape()) {
    throw ShapeError("dataset window shape does not match the model input");
  }

  const std::size_t dim = model.feature_dim();
  std::string out = "domain_id,label,pseudo_label";
  for (std::size_t f = 0; f < dim; ++f) out += ",f_" + std::to_string(f);
  out += "\n";
  auto emit = [&](const DomainDataset& d, std::span<const int> labels) {
    const Tensor features = model.generator.infer(d.windows);
    const std::vector<int> pseudo = mean_prob_labels(ensemble_from_features(model.classifiers, features));
    for (std::size_t i = 0; i < d.size(); ++i) {
      out += d.id + "," + std::to_string(labels.empty() ? -1 : labels[i]) + "," + std::to_string(pseudo[i]);
      for (double v : features.row(i)) out += "," + io::format_double(v);
      out += "\n";
    }
  };
  for (const DomainDataset& d : bundle.sources) emit(d, d.labels);
  emit(bundle.target, bundle.eval_labels);

  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  io::write_atomic(out_path, out);
  return out_path;
}

fs::path cmd_synth(const TrainConfig& config, const fs::path& out_dir) {
  if (config.preset.empty()) throw ConfigError("preset", "synth needs a preset");
  TrainConfig c = config;
  c.manifest.clear();
  c.validate();
  return write_manifest(resolve_dataset(c), out_dir);
}

}  // namespace wmdd::cli
