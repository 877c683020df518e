// wmdd: train, ablate, sweep, oracle, export-embeddings, synth.
//
// Exit codes: 0 success, 1 runtime failure (including failed oracle
// checks), 2 invalid configuration or input.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "wmdd/config.hpp"
#include "wmdd/errors.hpp"
#include "wmdd/io.hpp"
#include "wmdd/runs.hpp"

namespace {

using namespace wmdd;
namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string preset;
  std::string param;
  std::string values;
  std::string check = "all";
  std::string model;
};

TrainConfig resolve_config(const Options& o) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.preset.empty()) {
    c.preset = o.preset;
    c.manifest.clear();
  }
  c.validate();
  return c;
}

fs::path output_dir(const Options& o, const char* verb) {
  return o.out.empty() ? cli::default_output_root() / verb : fs::path(o.out);
}

void print_battery(const cli::BatteryResult& r) {
  for (const cli::ArmSummary& arm : r.arms) {
    std::printf("%-12s acc %.4f +- %.4f over %zu seeds\n", arm.name.c_str(), arm.mean, arm.stddev,
                arm.seeds.size());
  }
  std::printf("summary: %s\n", r.summary.string().c_str());
}

int run(const std::string& verb, const Options& o) {
  if (verb == "train") {
    const cli::RunArtifacts art = cli::cmd_train(resolve_config(o), output_dir(o, "train"));
    if (art.report.final_accuracy) std::printf("target accuracy %.4f\n", *art.report.final_accuracy);
    std::printf("metrics: %s\n", art.metrics.string().c_str());
    return cli::kSuccess;
  }
  if (verb == "ablate") {
    print_battery(cli::cmd_ablate(resolve_config(o), output_dir(o, "ablate")));
    return cli::kSuccess;
  }
  if (verb == "sweep") {
    if (o.param.empty()) throw ConfigError("param", "sweep needs --param");
    if (o.values.empty()) throw ConfigError("values", "sweep needs --values");
    print_battery(cli::cmd_sweep(resolve_config(o), o.param, cli::parse_value_list(o.values), output_dir(o, "sweep")));
    return cli::kSuccess;
  }
  if (verb == "oracle") {
    bool ok = true;
    for (const cli::OracleCheck& c : cli::cmd_oracle(o.check)) {
      std::printf("%-13s %zu/%zu passed, max error %s, %.3f s\n", c.name.c_str(), c.passes, c.cases,
                  io::format_double(c.max_error).c_str(), c.seconds);
      if (!c.passed()) {
        ok = false;
        std::printf("  first counterexample: %s\n", c.counterexample.value_or("(none recorded)").c_str());
      }
    }
    return ok ? cli::kSuccess : cli::kRuntimeFailure;
  }
  if (verb == "export-embeddings") {
    if (o.model.empty()) throw ConfigError("model", "export-embeddings needs --model");
    const fs::path out = o.out.empty() ? cli::default_output_root() / "embeddings.csv" : fs::path(o.out);
    std::printf("%s\n", cli::cmd_export_embeddings(o.model, resolve_config(o), out).string().c_str());
    return cli::kSuccess;
  }
  if (verb == "synth") {
    std::printf("%s\n", cli::cmd_synth(resolve_config(o), output_dir(o, "synth")).string().c_str());
    return cli::kSuccess;
  }
  return cli::kValidationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-aware multi-source domain adaptation"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file");
    sub->add_option("--seed", o.seed, "Override the configured seed");
    sub->add_option("--out", o.out, "Output directory (file for export-embeddings)");
    sub->add_option("--preset", o.preset, "Synthetic preset: near-far, three-source, identical");
  };
  add_common(app.add_subcommand("train", "Run one training job"));
  add_common(app.add_subcommand("ablate", "Run the full/No-W/No-A/No-W-A arms over the configured seeds"));
  CLI::App* sweep = app.add_subcommand("sweep", "Run one battery per value of a hyperparameter");
  add_common(sweep);
  sweep->add_option("--param", o.param, "gamma, K or eta");
  sweep->add_option("--values", o.values, "Comma-separated values");
  CLI::App* oracle = app.add_subcommand("oracle", "Run the analytic oracle suites");
  oracle->add_option("--check", o.check, "theorem4, proposition1, gradcheck or all");
  CLI::App* embed = app.add_subcommand("export-embeddings", "Write generator features of every sample");
  add_common(embed);
  embed->add_option("--model", o.model, "model.json from a training run");
  add_common(app.add_subcommand("synth", "Write a synthetic bundle as manifest + CSVs"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kSuccess : cli::kValidationFailure;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid config: " << e.what() << "\n";
    return cli::kValidationFailure;
  } catch (const DataError& e) {
    std::cerr << "error: invalid data: " << e.what() << "\n";
    return cli::kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kRuntimeFailure;
  }
}
