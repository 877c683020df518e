#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wmdd/adam.hpp"
#include "wmdd/nn.hpp"

namespace wmdd {

struct Architecture {
  std::vector<std::size_t> generator_channels{16, 32, 32};
  std::size_t kernel_width = 5;
  std::vector<std::size_t> classifier_hidden{64, 64};
};

// Feature generator, K ensemble classifiers and one auxiliary classifier per
// source, each with its own optimizer state.
struct ModelState {
  Network generator;
  std::vector<Network> classifiers;
  std::vector<Network> auxiliaries;
  AdamState generator_opt;
  std::vector<AdamState> classifier_opts;
  std::vector<AdamState> auxiliary_opts;

  static ModelState create(std::size_t channels, std::size_t width, std::size_t classes, std::size_t sources,
                           std::size_t members, const Architecture& arch, const AdamConfig& adam,
                           std::uint64_t seed);

  std::size_t feature_dim() const { return generator.output_shape().at(0); }
  std::size_t classes() const { return classifiers.front().output_shape().at(0); }
};

// Parameters only (no optimizer moments), as JSON.
std::string export_model(const ModelState& model);
// Restores networks exported by export_model(); optimizer states are fresh.
ModelState import_model(const std::string& text, const AdamConfig& adam = {});

}  // namespace wmdd
