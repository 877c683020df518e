#pragma once

// Labeled source domains and one unlabeled target domain of fixed-shape
// sensor windows, with manifest ingestion, synthetic task generation,
// splitting and deterministic batching.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmdd/tensor.hpp"

namespace wmdd {

enum class DomainRole { source, target };

struct DomainDataset {
  std::string id;
  DomainRole role = DomainRole::source;
  Tensor windows;           // [n_samples, channels, width]
  std::vector<int> labels;  // one per sample for sources; empty for the target

  std::size_t size() const { return windows.rank() == 0 ? 0 : windows.dim(0); }
  std::size_t channels() const { return windows.dim(1); }
  std::size_t width() const { return windows.dim(2); }

  // Throws DataError when the role/label contract is broken.
  void validate(std::size_t class_count) const;
};

struct DatasetBundle {
  std::vector<DomainDataset> sources;
  DomainDataset target;
  std::size_t class_count = 0;
  // Held-out target labels; only ever used for evaluation.
  std::vector<int> eval_labels;
  // Ground-truth shift magnitudes of synthetic bundles (empty otherwise).
  std::vector<double> source_shifts;
  std::optional<double> target_shift;

  std::size_t channels() const { return target.channels(); }
  std::size_t width() const { return target.width(); }

  void validate() const;
};

struct Batch {
  Tensor inputs;                     // [b, channels, width]
  std::vector<int> labels;           // empty for target batches
  std::vector<std::size_t> indices;  // rows of the parent dataset
  std::string domain_id;

  std::size_t size() const { return inputs.dim(0); }
};

// ---------------------------------------------------------------------------
// Manifest: a JSON descriptor plus one CSV per domain. CSV columns are
// `label` (-1 for unlabeled) followed by the channel-major flattened window.
//
//   {"class_count": 7, "channels": 2, "width": 30,
//    "domains": [{"id": "s1", "role": "source", "csv": "s1.csv"}, ...]}
//
// CSV paths are resolved relative to the manifest. Target labels, when
// present, are routed to `eval_labels`.

DatasetBundle load_manifest(const std::filesystem::path& path);

// Writes `bundle` as manifest.json plus per-domain CSVs into `dir`. Values
// are printed in shortest round-trip form, so reloading is bit-exact.
std::filesystem::path write_manifest(const DatasetBundle& bundle, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic multi-source task.

struct SynthSpec {
  std::string preset = "custom";
  std::size_t classes = 4;
  std::size_t n_per_domain = 400;
  std::size_t channels = 2;
  std::size_t width = 16;
  std::size_t latent_dim = 4;
  double class_separation = 2.0;
  double noise_std = 0.6;
  double render_noise = 0.05;
  std::vector<double> source_shifts{0.1, 2.0};
  double target_shift = 0.5;
  std::uint64_t seed = 0;
};

// Named presets: "near-far" (2 sources, shifts 0.1 / 2.0), "three-source"
// (shifts 0.1 / 1.0 / 2.0), "identical" (every shift 0). Throws
// std::invalid_argument for unknown names.
SynthSpec synth_preset(std::string_view name);
std::vector<std::string> synth_preset_names();

// Class-conditional Gaussian clusters in a latent space, perturbed per
// domain by a rotation and mean offset scaled by the domain's shift
// magnitude, rendered into [channels, width] windows by fixed smooth bases.
// Source perturbations compose on top of the target's, so a source with
// shift 0 is distributed exactly like the target.
DatasetBundle synth_generate(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// Splitting and batching.

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then the first round(ratio * n) rows (clamped to
// [1, n - 1]) go to train.
SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed);

DomainDataset subset(const DomainDataset& dataset, std::span<const std::size_t> rows);

std::pair<DomainDataset, DomainDataset> split(const DomainDataset& dataset, double ratio, std::uint64_t seed);

inline constexpr std::size_t kDefaultBatchSize = 256;

// Endless stream of batches; each epoch is a fresh seeded permutation and
// ends with a short batch when n is not a multiple of the batch size.
class BatchIterator {
 public:
  BatchIterator(const DomainDataset& dataset, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  const DomainDataset* dataset_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace wmdd
