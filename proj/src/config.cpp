#include "wmdd/config.hpp"

#include <json.hpp>

#include "wmdd/errors.hpp"
#include "wmdd/io.hpp"

namespace wmdd {

namespace {

using nlohmann::json;

std::uint64_t as_uint(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) {
    if (v.is_number_integer()) throw ConfigError(key, "must be non-negative");
    throw ConfigError(key, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

template <typename T>
std::vector<T> as_uint_list(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key, "expected a list of non-negative integers");
  std::vector<T> out;
  for (const json& e : v) out.push_back(static_cast<T>(as_uint(e, key)));
  return out;
}

}  // namespace

TrainConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config", "expected a JSON object");

  TrainConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (key == "n_iter") c.n_iter = as_uint(v, key);
    else if (key == "batch_size") c.batch_size = as_uint(v, key);
    else if (key == "learning_rate") c.learning_rate = as_double(v, key);
    else if (key == "members") c.members = as_uint(v, key);
    else if (key == "eta") c.eta = as_double(v, key);
    else if (key == "gamma") c.gamma = as_double(v, key);
    else if (key == "mu") c.mu = as_double(v, key);
    else if (key == "seed") c.seed = as_uint(v, key);
    else if (key == "data_seed") c.data_seed = v.is_null() ? std::nullopt : std::optional(as_uint(v, key));
    else if (key == "use_weights") c.use_weights = as_bool(v, key);
    else if (key == "use_adversary") c.use_adversary = as_bool(v, key);
    else if (key == "use_disparity") c.use_disparity = as_bool(v, key);
    else if (key == "center_weights") c.center_weights = as_bool(v, key);
    else if (key == "verify_freeze") c.verify_freeze = as_bool(v, key);
    else if (key == "final_refine_steps") c.final_refine_steps = as_uint(v, key);
    else if (key == "manifest") c.manifest = as_string(v, key);
    else if (key == "preset") c.preset = as_string(v, key);
    else if (key == "synth_n_per_domain") c.synth_n_per_domain = as_uint(v, key);
    else if (key == "synth_classes") c.synth_classes = as_uint(v, key);
    else if (key == "synth_channels") c.synth_channels = as_uint(v, key);
    else if (key == "synth_width") c.synth_width = as_uint(v, key);
    else if (key == "generator_channels") c.arch.generator_channels = as_uint_list<std::size_t>(v, key);
    else if (key == "kernel_width") c.arch.kernel_width = as_uint(v, key);
    else if (key == "classifier_hidden") c.arch.classifier_hidden = as_uint_list<std::size_t>(v, key);
    else if (key == "train_ratio") c.train_ratio = as_double(v, key);
    else if (key == "eval_every") c.eval_every = as_uint(v, key);
    else if (key == "seeds") c.seeds = as_uint_list<std::uint64_t>(v, key);
    else throw ConfigError(key, "unknown configuration key");
  }
  if (!c.manifest.empty()) {
    std::filesystem::path m(c.manifest);
    if (m.is_relative() && !base_dir.empty()) m = base_dir / m;
    c.manifest = m.lexically_normal().string();
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("config", e.what());
  }
  return config_from_json(text, path.parent_path());
}

std::string config_to_json(const TrainConfig& c) {
  json doc = json::object();
  doc["n_iter"] = c.n_iter;
  doc["batch_size"] = c.batch_size;
  doc["learning_rate"] = c.learning_rate;
  doc["members"] = c.members;
  doc["eta"] = c.eta;
  doc["gamma"] = c.gamma;
  doc["mu"] = c.mu;
  doc["seed"] = c.seed;
  doc["data_seed"] = c.data_seed ? json(*c.data_seed) : json(nullptr);
  doc["use_weights"] = c.use_weights;
  doc["use_adversary"] = c.use_adversary;
  doc["use_disparity"] = c.use_disparity;
  doc["center_weights"] = c.center_weights;
  doc["verify_freeze"] = c.verify_freeze;
  doc["final_refine_steps"] = c.final_refine_steps;
  doc["manifest"] = c.manifest.empty() ? std::string() : std::filesystem::absolute(c.manifest).string();
  doc["preset"] = c.preset;
  doc["synth_n_per_domain"] = c.synth_n_per_domain;
  doc["synth_classes"] = c.synth_classes;
  doc["synth_channels"] = c.synth_channels;
  doc["synth_width"] = c.synth_width;
  doc["generator_channels"] = c.arch.generator_channels;
  doc["kernel_width"] = c.arch.kernel_width;
  doc["classifier_hidden"] = c.arch.classifier_hidden;
  doc["train_ratio"] = c.train_ratio;
  doc["eval_every"] = c.eval_every;
  doc["seeds"] = c.seeds;
  return doc.dump(2) + "\n";
}

}  // namespace wmdd
