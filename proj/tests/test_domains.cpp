#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "wmdd/domains.hpp"
#include "wmdd/errors.hpp"
#include "wmdd/io.hpp"

namespace {

using namespace wmdd;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wmdd_domains_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// `labels[i]` per row; features are row-dependent constants.
std::string csv(std::size_t features, const std::vector<int>& labels) {
  std::string out = "label";
  for (std::size_t f = 0; f < features; ++f) out += ",x" + std::to_string(f);
  out += "\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += std::to_string(labels[i]);
    for (std::size_t f = 0; f < features; ++f) out += "," + std::to_string(i) + "." + std::to_string(f);
    out += "\n";
  }
  return out;
}

const char* kManifest = R"({"class_count": 3, "channels": 2, "width": 3, "domains": [
  {"id": "s1", "role": "source", "csv": "s1.csv"},
  {"id": "s2", "role": "source", "csv": "s2.csv"},
  {"id": "t", "role": "target", "csv": "t.csv"}]})";

std::vector<int> cycle_labels(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 3);
  return y;
}

TEST(Manifest, LoadsTwoSourcesAndTarget) {
  const fs::path dir = scratch("load");
  write(dir / "manifest.json", kManifest);
  write(dir / "s1.csv", csv(6, cycle_labels(10)));
  write(dir / "s2.csv", csv(6, cycle_labels(10)));
  write(dir / "t.csv", csv(6, std::vector<int>(10, -1)));
  const DatasetBundle b = load_manifest(dir / "manifest.json");
  ASSERT_EQ(b.sources.size(), 2u);
  EXPECT_EQ(b.sources[0].size(), 10u);
  EXPECT_EQ(b.target.size(), 10u);
  EXPECT_EQ(b.sources[1].windows.shape, (Shape{10, 2, 3}));
  EXPECT_TRUE(b.target.labels.empty());
  EXPECT_TRUE(b.eval_labels.empty());
  // Channel-major: row 4, channel 1, time 2 is feature 5.
  EXPECT_DOUBLE_EQ(b.sources[0].windows[(4 * 2 + 1) * 3 + 2], 4.5);
}

TEST(Manifest, TargetLabelsAreQuarantined) {
  const fs::path dir = scratch("quarantine");
  write(dir / "manifest.json", kManifest);
  write(dir / "s1.csv", csv(6, cycle_labels(10)));
  write(dir / "s2.csv", csv(6, cycle_labels(10)));
  write(dir / "t.csv", csv(6, cycle_labels(10)));
  const DatasetBundle b = load_manifest(dir / "manifest.json");
  EXPECT_TRUE(b.target.labels.empty());
  EXPECT_EQ(b.eval_labels, cycle_labels(10));
}

TEST(Manifest, ShortRowNamesFileAndRow) {
  const fs::path dir = scratch("short");
  write(dir / "manifest.json",
        R"({"class_count": 2, "channels": 1, "width": 300, "domains": [
            {"id": "s1", "role": "source", "csv": "s1.csv"}, {"id": "t", "role": "target", "csv": "t.csv"}]})");
  write(dir / "t.csv", csv(300, std::vector<int>(4, -1)));
  std::string text = csv(300, {0, 1, 0, 1});
  // Drop the last feature of data row 3.
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  lines[3] = lines[3].substr(0, lines[3].rfind(','));
  std::string broken;
  for (const auto& l : lines) broken += l + "\n";
  write(dir / "s1.csv", broken);
  try {
    load_manifest(dir / "manifest.json");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("s1.csv"), std::string::npos) << what;
    EXPECT_NE(what.find("row 3 has 299 of 300 declared features"), std::string::npos) << what;
  }
}

TEST(Manifest, Rejections) {
  const fs::path dir = scratch("reject");
  write(dir / "s1.csv", csv(6, cycle_labels(4)));
  write(dir / "s2.csv", csv(6, {0, 1, 5, 0}));
  write(dir / "t.csv", csv(6, std::vector<int>(4, -1)));
  write(dir / "manifest.json", kManifest);
  try {
    load_manifest(dir / "manifest.json");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("s2.csv: row 3 label 5"), std::string::npos) << e.what();
  }

  write(dir / "s2.csv", csv(6, cycle_labels(4)));
  write(dir / "extra.json", R"({"class_count": 3, "channels": 2, "width": 3, "domains": [], "colour": 1})");
  EXPECT_THROW(load_manifest(dir / "extra.json"), DataError);
  EXPECT_THROW(load_manifest(dir / "absent.json"), DataError);

  write(dir / "missing_csv.json", R"({"class_count": 3, "channels": 2, "width": 3, "domains": [
      {"id": "s1", "role": "source", "csv": "nope.csv"}, {"id": "t", "role": "target", "csv": "t.csv"}]})");
  try {
    load_manifest(dir / "missing_csv.json");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.csv"), std::string::npos);
  }

  write(dir / "t_partial.csv", csv(6, {0, -1, 1, 2}));
  write(dir / "partial.json", R"({"class_count": 3, "channels": 2, "width": 3, "domains": [
      {"id": "s1", "role": "source", "csv": "s1.csv"}, {"id": "t", "role": "target", "csv": "t_partial.csv"}]})");
  EXPECT_THROW(load_manifest(dir / "partial.json"), DataError);
}

TEST(Manifest, WriteThenLoadIsBitExact) {
  SynthSpec spec = synth_preset("three-source");
  spec.n_per_domain = 30;
  spec.seed = 3;
  const DatasetBundle b = synth_generate(spec);
  const fs::path dir = scratch("roundtrip");
  const DatasetBundle back = load_manifest(write_manifest(b, dir));
  ASSERT_EQ(back.sources.size(), b.sources.size());
  for (std::size_t j = 0; j < b.sources.size(); ++j) {
    EXPECT_EQ(back.sources[j].windows, b.sources[j].windows);
    EXPECT_EQ(back.sources[j].labels, b.sources[j].labels);
    EXPECT_EQ(back.sources[j].id, b.sources[j].id);
  }
  EXPECT_EQ(back.target.windows, b.target.windows);
  EXPECT_EQ(back.eval_labels, b.eval_labels);
  EXPECT_EQ(back.source_shifts, b.source_shifts);
  EXPECT_EQ(back.target_shift, b.target_shift);
}

TEST(Bundle, RoleContract) {
  DatasetBundle b = synth_generate(synth_preset("near-far"));
  EXPECT_NO_THROW(b.validate());
  DatasetBundle leaky = b;
  leaky.target.labels = leaky.eval_labels;
  EXPECT_THROW(leaky.validate(), DataError);
  DatasetBundle unlabeled = b;
  unlabeled.sources[0].labels.clear();
  EXPECT_THROW(unlabeled.validate(), DataError);
  DatasetBundle out_of_range = b;
  out_of_range.sources[1].labels[0] = static_cast<int>(b.class_count);
  EXPECT_THROW(out_of_range.validate(), DataError);
}

TEST(Synth, SameSeedSameBundle) {
  SynthSpec spec = synth_preset("near-far");
  spec.seed = 11;
  const DatasetBundle a = synth_generate(spec);
  const DatasetBundle b = synth_generate(spec);
  for (std::size_t j = 0; j < a.sources.size(); ++j) EXPECT_EQ(a.sources[j].windows, b.sources[j].windows);
  EXPECT_EQ(a.target.windows, b.target.windows);
  spec.seed = 12;
  EXPECT_NE(synth_generate(spec).target.windows, a.target.windows);
  EXPECT_EQ(a.source_shifts, (std::vector<double>{0.1, 2.0}));
}

TEST(Synth, DegenerateRequestsRejected) {
  SynthSpec spec;
  spec.noise_std = 0.0;
  EXPECT_THROW(synth_generate(spec), std::invalid_argument);
  spec = SynthSpec{};
  spec.class_separation = 0.0;
  EXPECT_THROW(synth_generate(spec), std::invalid_argument);
  EXPECT_THROW(synth_preset("far-far"), std::invalid_argument);
}

// Per-class mean window of a domain.
std::vector<std::vector<double>> class_means(const DomainDataset& d, std::span<const int> labels, std::size_t classes) {
  std::vector<std::vector<double>> mean(classes, std::vector<double>(d.windows.row_size(), 0.0));
  std::vector<double> count(classes, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    count[c] += 1.0;
    const auto row = d.windows.row(i);
    for (std::size_t f = 0; f < row.size(); ++f) mean[c][f] += row[f];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (double& v : mean[c]) v /= count[c];
  }
  return mean;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Expected squared distance between the class-c means of two independent
// samples of one distribution: sum over features of var/n_a + var/n_b.
double sampling_noise(const DomainDataset& a, std::span<const int> la, const DomainDataset& b, std::span<const int> lb,
                      std::size_t c) {
  auto moments = [c](const DomainDataset& d, std::span<const int> labels) {
    std::vector<double> sum(d.windows.row_size(), 0.0);
    std::vector<double> sq(d.windows.row_size(), 0.0);
    double n = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (static_cast<std::size_t>(labels[i]) != c) continue;
      n += 1.0;
      const auto row = d.windows.row(i);
      for (std::size_t f = 0; f < row.size(); ++f) {
        sum[f] += row[f];
        sq[f] += row[f] * row[f];
      }
    }
    double var_over_n = 0.0;
    for (std::size_t f = 0; f < sum.size(); ++f) var_over_n += (sq[f] / n - (sum[f] / n) * (sum[f] / n)) / n;
    return var_over_n;
  };
  return moments(a, la) + moments(b, lb);
}

TEST(Synth, ZeroShiftDomainsShareTheirDistribution) {
  // With every shift 0 the class-mean windows of all domains agree up to
  // sampling noise; the far preset is included as a contrast.
  auto ratio = [](const char* preset) {
    SynthSpec spec = synth_preset(preset);
    spec.n_per_domain = 4000;
    spec.seed = 5;
    const DatasetBundle b = synth_generate(spec);
    const auto t = class_means(b.target, b.eval_labels, b.class_count);
    double worst = 0.0;
    for (const DomainDataset& s : b.sources) {
      const auto m = class_means(s, s.labels, b.class_count);
      for (std::size_t c = 0; c < b.class_count; ++c) {
        worst = std::max(worst, sq_dist(m[c], t[c]) / sampling_noise(s, s.labels, b.target, b.eval_labels, c));
      }
    }
    return worst;
  };
  // A ratio of independent-sample distance to its expectation is ~1;
  // 3 leaves room for the max over classes and sources.
  EXPECT_LT(ratio("identical"), 3.0);
  EXPECT_GT(ratio("near-far"), 100.0);
}

// Nearest-class-mean probe: fit on a labeled domain, score on the target.
double probe_accuracy(const DomainDataset& train, const DatasetBundle& b) {
  const auto means = class_means(train, train.labels, b.class_count);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < b.target.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < b.class_count; ++c) {
      if (sq_dist(b.target.windows.row(i), means[c]) < sq_dist(b.target.windows.row(i), means[best])) best = c;
    }
    correct += static_cast<int>(best) == b.eval_labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(b.target.size());
}

TEST(Synth, NearSourceTransfersBetterThanFarSource) {
  int near_wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthSpec spec = synth_preset("near-far");
    spec.seed = seed;
    const DatasetBundle b = synth_generate(spec);
    near_wins += probe_accuracy(b.sources[0], b) > probe_accuracy(b.sources[1], b) ? 1 : 0;
  }
  EXPECT_GE(near_wins, 18);
}

TEST(Synth, ShiftOrderingIsMonotoneInProbeTransfer) {
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthSpec spec = synth_preset("three-source");
    spec.seed = seed;
    const DatasetBundle b = synth_generate(spec);
    const double a0 = probe_accuracy(b.sources[0], b);
    const double a1 = probe_accuracy(b.sources[1], b);
    const double a2 = probe_accuracy(b.sources[2], b);
    monotone += (a0 >= a1 && a1 >= a2) ? 1 : 0;
  }
  EXPECT_GE(monotone, 16);
}

TEST(Split, SevenThree) {
  const SplitIndices s = split_indices(10, 0.7, 1);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.test.size(), 3u);
}

TEST(Split, DisjointAndComplete) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 300;
    const double ratio = 0.01 + 0.98 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const SplitIndices s = split_indices(n, ratio, rng());
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(n);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(all, expected);
    EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - ratio * static_cast<double>(n)), 1.0);
    EXPECT_GE(s.train.size(), 1u);
    EXPECT_GE(s.test.size(), 1u);
  }
}

TEST(Split, SeedControlsPermutation) {
  EXPECT_EQ(split_indices(50, 0.7, 9).train, split_indices(50, 0.7, 9).train);
  std::set<std::vector<std::size_t>> distinct;
  for (std::uint64_t seed = 0; seed < 5; ++seed) distinct.insert(split_indices(50, 0.7, seed).train);
  EXPECT_EQ(distinct.size(), 5u);
}

TEST(Split, Rejections) {
  EXPECT_THROW(split_indices(1, 0.7, 0), DataError);
  EXPECT_THROW(split_indices(10, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(split_indices(10, 1.0, 0), std::invalid_argument);
}

TEST(Split, DatasetSplitKeepsLabelsAligned) {
  SynthSpec spec = synth_preset("near-far");
  spec.n_per_domain = 20;
  const DatasetBundle b = synth_generate(spec);
  const auto [train, test] = split(b.sources[0], 0.7, 3);
  EXPECT_EQ(train.size(), 14u);
  EXPECT_EQ(test.size(), 6u);
  const SplitIndices idx = split_indices(20, 0.7, 3);
  for (std::size_t i = 0; i < idx.train.size(); ++i) {
    EXPECT_EQ(train.labels[i], b.sources[0].labels[idx.train[i]]);
    const auto got = train.windows.row(i);
    const auto want = b.sources[0].windows.row(idx.train[i]);
    EXPECT_TRUE(std::equal(got.begin(), got.end(), want.begin()));
  }
}

DomainDataset tiny(std::size_t n) {
  DomainDataset d;
  d.id = "tiny";
  d.windows = Tensor({n, 1, 1});
  for (std::size_t i = 0; i < n; ++i) d.windows[i] = static_cast<double>(i);
  d.labels.assign(n, 0);
  return d;
}

TEST(Batching, ShortFinalBatch) {
  const DomainDataset d = tiny(5);
  BatchIterator it(d, 2, 1);
  EXPECT_EQ(it.next().size(), 2u);
  EXPECT_EQ(it.next().size(), 2u);
  EXPECT_EQ(it.next().size(), 1u);
  EXPECT_EQ(it.next().size(), 2u);
  EXPECT_EQ(it.epoch(), 1u);
}

TEST(Batching, EveryEpochIsAPermutation) {
  const DomainDataset d = tiny(23);
  BatchIterator it(d, 4, 7);
  std::vector<std::vector<std::size_t>> epochs;
  for (int e = 0; e < 3; ++e) {
    std::vector<std::size_t> seen;
    while (seen.size() < 23) {
      const Batch b = it.next();
      for (std::size_t k = 0; k < b.size(); ++k) {
        EXPECT_EQ(b.inputs[k], static_cast<double>(b.indices[k]));
        seen.push_back(b.indices[k]);
      }
    }
    EXPECT_EQ(seen.size(), 23u);
    epochs.push_back(seen);
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < 23; ++i) EXPECT_EQ(seen[i], i);
  }
  EXPECT_NE(epochs[0], epochs[1]);
}

TEST(Batching, DeterministicUnderSeed) {
  const DomainDataset d = tiny(17);
  BatchIterator a(d, 5, 3);
  BatchIterator b(d, 5, 3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next().indices, b.next().indices);
  EXPECT_EQ(kDefaultBatchSize, 256u);
}

TEST(Batching, TargetBatchesCarryNoLabels) {
  const DatasetBundle b = synth_generate(synth_preset("near-far"));
  BatchIterator it(b.target, 64, 1);
  EXPECT_TRUE(it.next().labels.empty());
  BatchIterator src(b.sources[0], 64, 1);
  EXPECT_EQ(src.next().labels.size(), 64u);
}

}  // namespace
