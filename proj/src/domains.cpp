#include "wmdd/domains.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>

#include <json.hpp>

#include "wmdd/errors.hpp"
#include "wmdd/io.hpp"

namespace wmdd {

using nlohmann::json;

void DomainDataset::validate(std::size_t class_count) const {
  if (windows.rank() != 3) throw DataError(id + ": windows must be [n, channels, width]");
  if (size() == 0) throw DataError(id + ": domain has no samples");
  if (role == DomainRole::source) {
    if (labels.size() != size()) throw DataError(id + ": source domain needs one label per sample");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
        throw DataError(id + ": label " + std::to_string(labels[i]) + " at row " + std::to_string(i + 1) +
                        " outside [0, " + std::to_string(class_count) + ")");
      }
    }
  } else if (!labels.empty()) {
    throw DataError(id + ": target domain must not carry training labels");
  }
}

void DatasetBundle::validate() const {
  if (sources.empty()) throw DataError("bundle needs at least one source domain");
  if (class_count < 2) throw DataError("class_count must be at least 2");
  target.validate(class_count);
  if (target.role != DomainRole::target) throw DataError(target.id + ": target slot holds a source domain");
  for (const DomainDataset& s : sources) {
    s.validate(class_count);
    if (s.role != DomainRole::source) throw DataError(s.id + ": source slot holds a target domain");
    if (s.channels() != target.channels() || s.width() != target.width()) {
      throw DataError(s.id + ": window shape differs from the target's");
    }
  }
  if (!eval_labels.empty()) {
    if (eval_labels.size() != target.size()) throw DataError("eval_labels length differs from target size");
    for (int y : eval_labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= class_count) throw DataError("eval label out of range");
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

struct CsvContent {
  Tensor windows;
  std::vector<int> labels;  // -1 where unlabeled
};

CsvContent read_domain_csv(const std::filesystem::path& path, std::size_t channels, std::size_t width) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": file not found");
  const std::size_t features = channels * width;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  {
    auto header = io::split_fields(line);
    if (header.empty() || header[0] != "label") {
      throw DataError(path.string() + ": header must start with 'label'");
    }
    if (header.size() != features + 1) {
      throw DataError(path.string() + ": header declares " + std::to_string(header.size() - 1) +
                      " features, manifest shape needs " + std::to_string(features));
    }
  }
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    auto fields = io::split_fields(line);
    if (fields.size() != features + 1) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size() - 1) + " of " + std::to_string(features) +
                      " declared features");
    }
    long long label = 0;
    if (!io::parse_int(fields[0], label) || label < -1) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has an invalid label");
    }
    labels.push_back(static_cast<int>(label));
    for (std::size_t f = 1; f < fields.size(); ++f) {
      double v = 0.0;
      if (!io::parse_double(fields[f], v) || !std::isfinite(v)) {
        throw DataError(path.string() + ": row " + std::to_string(row) + " column " + std::to_string(f + 1) +
                        " is not a finite number");
      }
      values.push_back(v);
    }
  }
  if (row == 0) throw DataError(path.string() + ": no data rows");
  return {Tensor({row, channels, width}, std::move(values)), std::move(labels)};
}

std::size_t require_positive(const json& doc, const char* key, const std::string& where) {
  if (!doc.contains(key) || !doc[key].is_number_integer() || doc[key].get<long long>() <= 0) {
    throw DataError(where + ": '" + key + "' must be a positive integer");
  }
  return doc[key].get<std::size_t>();
}

}  // namespace

DatasetBundle load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError(path.string() + ": manifest not found");
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const std::string where = path.string();
  static const std::set<std::string> kKeys{"class_count", "channels", "width", "domains"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!kKeys.count(it.key())) throw DataError(where + ": unknown key '" + it.key() + "'");
  }
  DatasetBundle bundle;
  bundle.class_count = require_positive(doc, "class_count", where);
  const std::size_t channels = require_positive(doc, "channels", where);
  const std::size_t width = require_positive(doc, "width", where);
  if (!doc.contains("domains") || !doc["domains"].is_array()) {
    throw DataError(where + ": 'domains' must be an array");
  }

  const std::filesystem::path base = path.parent_path();
  bool have_target = false;
  std::set<std::string> seen;
  for (const json& d : doc["domains"]) {
    if (!d.is_object() || !d.contains("id") || !d.contains("role") || !d.contains("csv")) {
      throw DataError(where + ": each domain needs 'id', 'role' and 'csv'");
    }
    DomainDataset ds;
    ds.id = d["id"].get<std::string>();
    if (!seen.insert(ds.id).second) throw DataError(where + ": duplicate domain id '" + ds.id + "'");
    const std::string role = d["role"].get<std::string>();
    const std::filesystem::path csv = base / d["csv"].get<std::string>();
    CsvContent content = read_domain_csv(csv, channels, width);
    ds.windows = std::move(content.windows);
    if (role == "source") {
      ds.role = DomainRole::source;
      for (std::size_t i = 0; i < content.labels.size(); ++i) {
        const int y = content.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= bundle.class_count) {
          throw DataError(csv.string() + ": row " + std::to_string(i + 1) + " label " + std::to_string(y) +
                          " outside [0, " + std::to_string(bundle.class_count) + ")");
        }
      }
      ds.labels = std::move(content.labels);
      if (d.contains("shift")) bundle.source_shifts.push_back(d["shift"].get<double>());
      bundle.sources.push_back(std::move(ds));
    } else if (role == "target") {
      if (have_target) throw DataError(where + ": more than one target domain");
      have_target = true;
      ds.role = DomainRole::target;
      const bool any_labeled = std::any_of(content.labels.begin(), content.labels.end(), [](int y) { return y >= 0; });
      if (any_labeled) {
        for (std::size_t i = 0; i < content.labels.size(); ++i) {
          const int y = content.labels[i];
          if (y < 0 || static_cast<std::size_t>(y) >= bundle.class_count) {
            throw DataError(csv.string() + ": row " + std::to_string(i + 1) +
                            " target labels must be all present and in range, or all -1");
          }
        }
        bundle.eval_labels = std::move(content.labels);
      }
      if (d.contains("shift")) bundle.target_shift = d["shift"].get<double>();
      bundle.target = std::move(ds);
    } else {
      throw DataError(where + ": domain '" + ds.id + "' has unknown role '" + role + "'");
    }
  }
  if (!have_target) throw DataError(where + ": no target domain declared");
  if (!bundle.source_shifts.empty() && bundle.source_shifts.size() != bundle.sources.size()) {
    bundle.source_shifts.clear();
  }
  bundle.validate();
  return bundle;
}

namespace {

std::string domain_csv(const DomainDataset& ds, const std::vector<int>& labels) {
  std::string out = "label";
  const std::size_t features = ds.channels() * ds.width();
  for (std::size_t f = 0; f < features; ++f) out += ",x" + std::to_string(f);
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += std::to_string(labels.empty() ? -1 : labels[i]);
    for (double v : ds.windows.row(i)) {
      out += ',';
      out += io::format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace

std::filesystem::path write_manifest(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  std::filesystem::create_directories(dir);
  json doc;
  doc["class_count"] = bundle.class_count;
  doc["channels"] = bundle.channels();
  doc["width"] = bundle.width();
  doc["domains"] = json::array();
  for (std::size_t j = 0; j < bundle.sources.size(); ++j) {
    const DomainDataset& s = bundle.sources[j];
    json d{{"id", s.id}, {"role", "source"}, {"csv", s.id + ".csv"}};
    if (j < bundle.source_shifts.size()) d["shift"] = bundle.source_shifts[j];
    doc["domains"].push_back(d);
    io::write_atomic(dir / (s.id + ".csv"), domain_csv(s, s.labels));
  }
  json t{{"id", bundle.target.id}, {"role", "target"}, {"csv", bundle.target.id + ".csv"}};
  if (bundle.target_shift) t["shift"] = *bundle.target_shift;
  doc["domains"].push_back(t);
  io::write_atomic(dir / (bundle.target.id + ".csv"), domain_csv(bundle.target, bundle.eval_labels));
  const std::filesystem::path manifest = dir / "manifest.json";
  io::write_atomic(manifest, doc.dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------
// Splitting and batching

SplitIndices split_indices(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  if (n < 2) throw DataError("cannot split fewer than 2 samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

DomainDataset subset(const DomainDataset& dataset, std::span<const std::size_t> rows) {
  DomainDataset out;
  out.id = dataset.id;
  out.role = dataset.role;
  out.windows = gather_rows(dataset.windows, rows);
  if (!dataset.labels.empty()) {
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(dataset.labels.at(r));
  }
  return out;
}

std::pair<DomainDataset, DomainDataset> split(const DomainDataset& dataset, double ratio, std::uint64_t seed) {
  SplitIndices s = split_indices(dataset.size(), ratio, seed);
  return {subset(dataset, s.train), subset(dataset, s.test)};
}

BatchIterator::BatchIterator(const DomainDataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed), order_(dataset.size()) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (dataset.size() == 0) throw DataError(dataset.id + ": cannot batch an empty domain");
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

Batch BatchIterator::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  Batch b;
  b.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                   order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  b.inputs = gather_rows(dataset_->windows, b.indices);
  if (!dataset_->labels.empty()) {
    for (std::size_t r : b.indices) b.labels.push_back(dataset_->labels[r]);
  }
  b.domain_id = dataset_->id;
  return b;
}

}  // namespace wmdd
