#include "wmdd/model.hpp"

#include <json.hpp>

#include "wmdd/errors.hpp"

namespace wmdd {

using nlohmann::json;

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t role, std::uint64_t index) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (role * 1024 + index + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::relu: return "relu";
    case LayerKind::global_avg_pool: return "global_avg_pool";
  }
  return "?";
}

LayerKind kind_from(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "conv1d") return LayerKind::conv1d;
  if (s == "relu") return LayerKind::relu;
  if (s == "global_avg_pool") return LayerKind::global_avg_pool;
  throw Error("unknown layer kind '" + s + "'");
}

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const Layer& l : net.layers()) {
    json j{{"kind", kind_name(l.spec.kind)}};
    if (l.spec.kind == LayerKind::dense) {
      j["in"] = l.spec.in_features;
      j["out"] = l.spec.out_features;
    } else if (l.spec.kind == LayerKind::conv1d) {
      j["in_channels"] = l.spec.in_channels;
      j["out_channels"] = l.spec.out_channels;
      j["kernel_width"] = l.spec.kernel_width;
      j["in_length"] = l.spec.in_length;
    }
    if (l.spec.has_params()) {
      j["weight"] = l.weight.data;
      j["bias"] = l.bias.data;
    }
    layers.push_back(std::move(j));
  }
  return layers;
}

Network network_from_json(const json& layers) {
  std::vector<Layer> out;
  for (const json& j : layers) {
    Layer l;
    l.spec.kind = kind_from(j.at("kind").get<std::string>());
    if (l.spec.kind == LayerKind::dense) {
      l.spec.in_features = j.at("in").get<std::size_t>();
      l.spec.out_features = j.at("out").get<std::size_t>();
    } else if (l.spec.kind == LayerKind::conv1d) {
      l.spec.in_channels = j.at("in_channels").get<std::size_t>();
      l.spec.out_channels = j.at("out_channels").get<std::size_t>();
      l.spec.kernel_width = j.at("kernel_width").get<std::size_t>();
      l.spec.in_length = j.at("in_length").get<std::size_t>();
    }
    if (l.spec.has_params()) {
      l.weight = Tensor(l.spec.weight_shape(), j.at("weight").get<std::vector<double>>());
      l.bias = Tensor(l.spec.bias_shape(), j.at("bias").get<std::vector<double>>());
    }
    out.push_back(std::move(l));
  }
  return Network(std::move(out));
}

}  // namespace

ModelState ModelState::create(std::size_t channels, std::size_t width, std::size_t classes, std::size_t sources,
                              std::size_t members, const Architecture& arch, const AdamConfig& adam,
                              std::uint64_t seed) {
  if (members == 0) throw ShapeError("ensemble size K must be at least 1");
  if (sources == 0) throw ShapeError("need at least one source domain");
  ModelState m;
  m.generator = Network(generator_specs(channels, width, arch.generator_channels, arch.kernel_width), derive(seed, 0, 0));
  const std::size_t features = m.generator.output_shape().at(0);
  const auto head = classifier_specs(features, arch.classifier_hidden, classes);
  m.generator_opt = AdamState(m.generator, adam);
  for (std::size_t k = 0; k < members; ++k) {
    m.classifiers.emplace_back(head, derive(seed, 1, k));
    m.classifier_opts.emplace_back(m.classifiers.back(), adam);
  }
  for (std::size_t j = 0; j < sources; ++j) {
    m.auxiliaries.emplace_back(head, derive(seed, 2, j));
    m.auxiliary_opts.emplace_back(m.auxiliaries.back(), adam);
  }
  return m;
}

std::string export_model(const ModelState& model) {
  json doc;
  doc["generator"] = network_to_json(model.generator);
  doc["classifiers"] = json::array();
  for (const Network& n : model.classifiers) doc["classifiers"].push_back(network_to_json(n));
  doc["auxiliaries"] = json::array();
  for (const Network& n : model.auxiliaries) doc["auxiliaries"].push_back(network_to_json(n));
  return doc.dump() + "\n";
}

ModelState import_model(const std::string& text, const AdamConfig& adam) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model file: ") + e.what());
  }
  ModelState m;
  m.generator = network_from_json(doc.at("generator"));
  m.generator_opt = AdamState(m.generator, adam);
  for (const json& j : doc.at("classifiers")) {
    m.classifiers.push_back(network_from_json(j));
    m.classifier_opts.emplace_back(m.classifiers.back(), adam);
  }
  for (const json& j : doc.at("auxiliaries")) {
    m.auxiliaries.push_back(network_from_json(j));
    m.auxiliary_opts.emplace_back(m.auxiliaries.back(), adam);
  }
  if (m.classifiers.empty()) throw Error("model file: no classifiers");
  return m;
}

}  // namespace wmdd
