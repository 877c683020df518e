#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "wmdd/domains.hpp"
#include "wmdd/errors.hpp"

namespace wmdd {
namespace {

using Vec = std::vector<double>;

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double dotv(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec random_unit(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(d);
  double norm = 0.0;
  do {
    for (double& x : v) x = normal(rng);
    norm = std::sqrt(dotv(v, v));
  } while (norm < 1e-12);
  for (double& x : v) x /= norm;
  return v;
}

// Rotation by `angle` in the plane spanned by (u, v), then translation.
struct Perturbation {
  Vec u, v, offset;
  double angle = 0.0;

  void apply(Vec& z) const {
    if (angle != 0.0) {
      const double a = dotv(u, z);
      const double b = dotv(v, z);
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const double a2 = a * c - b * s;
      const double b2 = a * s + b * c;
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += (a2 - a) * u[i] + (b2 - b) * v[i];
    }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += offset[i];
  }
};

Perturbation make_perturbation(std::size_t d, double magnitude, std::mt19937_64& rng) {
  Perturbation p;
  p.u = random_unit(d, rng);
  Vec v = random_unit(d, rng);
  if (d >= 2) {
    double proj = dotv(v, p.u);
    for (std::size_t i = 0; i < d; ++i) v[i] -= proj * p.u[i];
    double norm = std::sqrt(dotv(v, v));
    while (norm < 1e-9) {
      v = random_unit(d, rng);
      proj = dotv(v, p.u);
      for (std::size_t i = 0; i < d; ++i) v[i] -= proj * p.u[i];
      norm = std::sqrt(dotv(v, v));
    }
    for (double& x : v) x /= norm;
  }
  p.v = v;
  p.angle = d >= 2 ? magnitude * std::numbers::pi / 4.0 : 0.0;
  Vec w = random_unit(d, rng);
  p.offset.resize(d);
  for (std::size_t i = 0; i < d; ++i) p.offset[i] = magnitude * w[i];
  return p;
}

}  // namespace

std::vector<std::string> synth_preset_names() { return {"near-far", "three-source", "identical"}; }

SynthSpec synth_preset(std::string_view name) {
  SynthSpec s;
  s.preset = std::string(name);
  if (name == "near-far") {
    s.source_shifts = {0.1, 2.0};
  } else if (name == "three-source") {
    s.source_shifts = {0.1, 1.0, 2.0};
  } else if (name == "identical") {
    s.source_shifts = {0.0, 0.0};
    s.target_shift = 0.0;
  } else {
    throw std::invalid_argument("unknown synthetic preset '" + std::string(name) + "'");
  }
  return s;
}

DatasetBundle synth_generate(const SynthSpec& spec) {
  if (spec.source_shifts.size() < 2) throw std::invalid_argument("synthetic task needs at least 2 sources");
  if (spec.classes < 2) throw std::invalid_argument("synthetic task needs at least 2 classes");
  if (spec.n_per_domain < 2) throw std::invalid_argument("synthetic task needs at least 2 samples per domain");
  if (spec.channels == 0 || spec.width == 0 || spec.latent_dim == 0) {
    throw std::invalid_argument("synthetic window and latent extents must be positive");
  }
  if (!(spec.noise_std > 0.0) || !(spec.class_separation > 0.0) || spec.render_noise < 0.0) {
    throw std::invalid_argument("degenerate covariance: noise_std and class_separation must be positive");
  }
  for (double s : spec.source_shifts) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("shift magnitudes must be finite and >= 0");
  }
  if (!(spec.target_shift >= 0.0)) throw std::invalid_argument("target shift must be >= 0");

  const std::size_t d = spec.latent_dim;
  const std::size_t features = spec.channels * spec.width;

  std::mt19937_64 world(stream_seed(spec.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  std::vector<Vec> means(spec.classes, Vec(d));
  for (Vec& m : means) {
    for (double& x : m) x = spec.class_separation * normal(world);
  }
  // Smooth rendering bases, one per latent axis.
  std::vector<Vec> bases(d, Vec(features));
  for (std::size_t i = 0; i < d; ++i) {
    const double freq = static_cast<double>(i + 1);
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      const double ph = phase(world);
      for (std::size_t t = 0; t < spec.width; ++t) {
        bases[i][ch * spec.width + t] =
            std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / static_cast<double>(spec.width) + ph);
      }
    }
  }

  std::mt19937_64 shifts_rng(stream_seed(spec.seed, 1));
  const Perturbation target_p = make_perturbation(d, spec.target_shift, shifts_rng);
  std::vector<Perturbation> source_p;
  for (double s : spec.source_shifts) source_p.push_back(make_perturbation(d, s, shifts_rng));

  auto render = [&](const std::vector<const Perturbation*>& chain, std::uint64_t stream, std::vector<int>& labels) {
    std::mt19937_64 rng(stream_seed(spec.seed, stream));
    std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.classes) - 1);
    Tensor windows({spec.n_per_domain, spec.channels, spec.width});
    Vec z(d);
    for (std::size_t n = 0; n < spec.n_per_domain; ++n) {
      const int y = pick(rng);
      labels.push_back(y);
      for (std::size_t i = 0; i < d; ++i) z[i] = means[static_cast<std::size_t>(y)][i] + spec.noise_std * normal(rng);
      for (const Perturbation* p : chain) p->apply(z);
      auto row = windows.row(n);
      for (std::size_t f = 0; f < features; ++f) {
        double v = 0.0;
        for (std::size_t i = 0; i < d; ++i) v += z[i] * bases[i][f];
        row[f] = v + spec.render_noise * normal(rng);
      }
    }
    return windows;
  };

  DatasetBundle bundle;
  bundle.class_count = spec.classes;
  for (std::size_t j = 0; j < source_p.size(); ++j) {
    DomainDataset ds;
    ds.id = "source_" + std::to_string(j + 1);
    ds.role = DomainRole::source;
    ds.windows = render({&target_p, &source_p[j]}, 10 + j, ds.labels);
    bundle.sources.push_back(std::move(ds));
  }
  bundle.target.id = "target";
  bundle.target.role = DomainRole::target;
  bundle.target.windows = render({&target_p}, 2, bundle.eval_labels);
  bundle.source_shifts = spec.source_shifts;
  bundle.target_shift = spec.target_shift;
  bundle.validate();
  return bundle;
}

}  // namespace wmdd
