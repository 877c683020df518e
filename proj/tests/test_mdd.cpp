#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wmdd/ensemble.hpp"
#include "wmdd/mdd.hpp"
#include "wmdd/model.hpp"

namespace {

using namespace wmdd;
using namespace wmdd::mdd;

const double kLn2 = std::log(2.0);

TEST(Margin, Examples) {
  EXPECT_DOUBLE_EQ(margin(std::vector<double>{2.0, 0.5, -1.0}, 0), 0.75);
  EXPECT_DOUBLE_EQ(margin(std::vector<double>{1, 1}, 0), 0.0);
  EXPECT_DOUBLE_EQ(margin(std::vector<double>{0, 3}, 0), -1.5);
}

TEST(Ramp, Branches) {
  EXPECT_DOUBLE_EQ(ramp_loss(0.2, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(ramp_loss(0.05, 0.1), 0.5);
  EXPECT_DOUBLE_EQ(ramp_loss(-1.0, 0.1), 1.0);
}

TEST(Ramp, BoundedMonotoneContinuousPiecewiseLinear) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> mu_draw(0.01, 5.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double mu = mu_draw(rng);
    const double a = (unit(rng) * 4.0 - 2.0) * mu;
    const double b = a + unit(rng) * mu;
    const double ra = ramp_loss(a, mu);
    const double rb = ramp_loss(b, mu);
    EXPECT_GE(ra, 0.0);
    EXPECT_LE(ra, 1.0);
    EXPECT_GE(ra, rb);
    // Lipschitz with constant 1/mu.
    EXPECT_LE(ra - rb, (b - a) / mu + 1e-12);
  }
  for (double mu : {0.1, 1.0, 3.0}) {
    EXPECT_NEAR(ramp_loss(1e-13, mu), 1.0, 1e-12);
    EXPECT_NEAR(ramp_loss(mu - 1e-13, mu), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(ramp_loss(0.25 * mu, mu), 0.75);
  }
}

TEST(MarginLoss, Examples) {
  const double mu = 0.1;
  EXPECT_DOUBLE_EQ(margin_loss(Tensor({2, 2}, {1, 0, 0, 1}), std::vector<int>{0, 1}, mu), 0.0);
  EXPECT_DOUBLE_EQ(margin_loss(Tensor({2, 2}, {0, 1, 1, 1}), std::vector<int>{0, 1}, mu), 1.0);
  // Margins 0.05 and 0.2.
  EXPECT_NEAR(margin_loss(Tensor({2, 2}, {0.1, 0, 0.4, 0}), std::vector<int>{0, 0}, mu), 0.25, 1e-15);
}

TEST(Surrogates, Examples) {
  EXPECT_NEAR(surrogate_source_term(std::vector<double>{1.0, 0.0}, 0), 0.0, 1e-15);
  EXPECT_NEAR(surrogate_source_term(std::vector<double>{1.0 / std::exp(1.0), 1.0 - 1.0 / std::exp(1.0)}, 0), 1.0,
              1e-15);
  EXPECT_NEAR(surrogate_source_term(std::vector<double>{0.5, 0.5}, 1), kLn2, 1e-15);
  EXPECT_NEAR(surrogate_target_term(std::vector<double>{0.0, 1.0}, 0), 0.0, 1e-15);
  EXPECT_NEAR(surrogate_target_term(std::vector<double>{1.0 - 1.0 / std::exp(1.0), 1.0 / std::exp(1.0)}, 0), -1.0,
              1e-15);
  EXPECT_NEAR(surrogate_target_term(std::vector<double>{0.5, 0.5}, 0), -kLn2, 1e-15);
  EXPECT_TRUE(std::isfinite(surrogate_target_term(std::vector<double>{1.0, 0.0}, 0)));
}

TEST(Floor, ClosedForm) {
  EXPECT_NEAR(objective_floor(0.1), 0.1 * std::log(0.1) - 1.1 * std::log(1.1), 1e-15);
  EXPECT_NEAR(objective_floor(0.1), -0.3350997, 1e-6);
  EXPECT_NEAR(objective_floor(1.0), -2.0 * kLn2, 1e-15);
}

TEST(DomainWeights, UnitLaws) {
  const DomainWeights u = domain_weights(std::vector<double>{0.3, 0.3});
  EXPECT_NEAR(u.alpha[0], 0.5, 1e-12);
  EXPECT_NEAR(u.alpha[1], 0.5, 1e-12);
  const DomainWeights a = domain_weights(std::vector<double>{0.0, kLn2});
  EXPECT_NEAR(a.alpha[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(a.alpha[1], 1.0 / 3.0, 1e-12);
  const DomainWeights b = domain_weights(std::vector<double>{-kLn2, 0.0});
  EXPECT_NEAR(b.alpha[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(b.alpha[1], 2.0 / 3.0, 1e-12);
}

TEST(DomainWeights, SimplexArgminAndShiftInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<double> e(n);
    for (double& v : e) v = normal(rng);
    const DomainWeights w = domain_weights(e);
    double total = 0.0;
    for (double a : w.alpha) {
      EXPECT_GE(a, 0.0);
      total += a;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    std::size_t arg_alpha = 0;
    std::size_t arg_abs = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (w.alpha[j] > w.alpha[arg_alpha]) arg_alpha = j;
      if (std::abs(e[j]) < std::abs(e[arg_abs])) arg_abs = j;
    }
    EXPECT_EQ(arg_alpha, arg_abs);
    // Expected value straight from the definition.
    double z = 0.0;
    for (double v : e) z += std::exp(-std::abs(v));
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(w.alpha[j], std::exp(-std::abs(e[j])) / z, 1e-12);

    std::vector<double> shifted(n);
    const double c = std::abs(normal(rng));
    for (std::size_t j = 0; j < n; ++j) shifted[j] = std::abs(e[j]) + c;
    const DomainWeights ws = domain_weights(shifted);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(ws.alpha[j], w.alpha[j], 1e-12);
  }
  EXPECT_THROW(domain_weights(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(domain_weights(std::vector<double>{0.0, NAN}), std::invalid_argument);
}

// Test-side oracle: D* evaluated directly and the KL form with its own KL.
struct ClosedForms {
  double direct;
  double kl;
};

ClosedForms closed_forms(const std::vector<double>& p, const std::vector<double>& q, double g) {
  double direct = 0.0;
  double kp = 0.0;
  double kq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0 && q[i] == 0.0) continue;
    const double d = g * p[i] / (g * p[i] + q[i]);
    const double z = (g * p[i] + q[i]) / (1.0 + g);
    if (p[i] > 0.0) {
      direct += g * p[i] * std::log(d);
      kp += p[i] * std::log(p[i] / z);
    }
    if (q[i] > 0.0) {
      direct += q[i] * std::log(1.0 - d);
      kq += q[i] * std::log(q[i] / z);
    }
  }
  return {direct, g * kp + kq + g * std::log(g) - (1.0 + g) * std::log(1.0 + g)};
}

TEST(DiscreteOracle, Examples) {
  const DiscreteOracle same = discrete_mdd_oracle({{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}, 0.1});
  EXPECT_NEAR(same.optimal_value, -0.3350997, 1e-6);
  EXPECT_NEAR(same.kl_form, -0.3350997, 1e-6);
  for (double d : same.discriminator) EXPECT_NEAR(d, 0.1 / 1.1, 1e-15);

  const DiscreteOracle one = discrete_mdd_oracle({{0.5, 0.5}, {0.5, 0.5}, 1.0});
  EXPECT_NEAR(one.optimal_value, -1.386294, 1e-6);

  const DiscreteOracle skew = discrete_mdd_oracle({{0.5, 0.5}, {0.9, 0.1}, 1.0});
  EXPECT_NEAR(skew.optimal_value, -1.18279, 1e-5);
  EXPECT_NEAR(skew.optimal_value, skew.kl_form, 1e-9);
  // Hand evaluation: D* = [5/14, 5/6].
  const double hand =
      0.5 * std::log(5.0 / 14.0) + 0.5 * std::log(5.0 / 6.0) + 0.9 * std::log(9.0 / 14.0) + 0.1 * std::log(1.0 / 6.0);
  EXPECT_NEAR(skew.optimal_value, hand, 1e-12);
}

std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng, bool allow_zero) {
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution zero(allow_zero ? 0.2 : 0.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) {
    x = zero(rng) ? 0.0 : e(rng);
    s += x;
  }
  if (s == 0.0) {
    v[0] = 1.0;
    s = 1.0;
  }
  for (double& x : v) x /= s;
  return v;
}

TEST(DiscreteOracle, RandomTriplesAgreeWithIndependentForms) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lg(std::log(0.01), std::log(10.0));
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 16;
    const DiscreteDistributionPair pair{random_simplex(n, rng, true), random_simplex(n, rng, true), std::exp(lg(rng))};
    const DiscreteOracle o = discrete_mdd_oracle(pair);
    const ClosedForms ref = closed_forms(pair.p, pair.q, pair.gamma);
    EXPECT_NEAR(o.optimal_value, o.kl_form, 1e-9);
    EXPECT_NEAR(o.optimal_value, ref.direct, 1e-9);
    EXPECT_NEAR(o.kl_form, ref.kl, 1e-9);
    EXPECT_NEAR(discrete_objective(pair, o.discriminator), o.optimal_value, 1e-9);
  }
}

TEST(DiscreteOracle, NoDiscriminatorBeatsTheOptimum) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(1e-6, 1.0 - 1e-6);
  std::uniform_real_distribution<double> lg(std::log(0.01), std::log(10.0));
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    const DiscreteDistributionPair pair{random_simplex(n, rng, false), random_simplex(n, rng, false),
                                        std::exp(lg(rng))};
    const double best = discrete_mdd_oracle(pair).optimal_value;
    for (int k = 0; k < 50; ++k) {
      std::vector<double> d(n);
      for (double& x : d) x = unit(rng);
      EXPECT_LE(discrete_objective(pair, d), best + 1e-9);
    }
  }
}

TEST(DiscreteOracle, FloorIsTheMinimumOverQ) {
  std::mt19937_64 rng(5);
  for (double g : {0.01, 0.1, 1.0, 10.0}) {
    const std::vector<double> p = random_simplex(4, rng, false);
    const double at_p = discrete_mdd_oracle({p, p, g}).optimal_value;
    EXPECT_NEAR(at_p, objective_floor(g), 1e-12);
    // Mass moved between every pair of cells, over a grid of step sizes.
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (i == j) continue;
        for (double t : {1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0}) {
          std::vector<double> q = p;
          const double moved = t * q[i];
          q[i] -= moved;
          q[j] += moved;
          EXPECT_GE(discrete_mdd_oracle({p, q, g}).optimal_value, at_p - 1e-12);
        }
      }
    }
  }
}

TEST(DiscreteOracle, EmptyCellsAreSkipped) {
  const DiscreteOracle o = discrete_mdd_oracle({{0.5, 0.0, 0.5}, {0.25, 0.0, 0.75}, 0.5});
  EXPECT_TRUE(std::isfinite(o.optimal_value));
  EXPECT_NEAR(o.optimal_value, o.kl_form, 1e-12);
  EXPECT_THROW(discrete_mdd_oracle({{0.5, 0.6}, {0.5, 0.5}, 1.0}), std::invalid_argument);
}

TEST(Proposition1, RampTriangleInequality) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> score(0.0, 2.0);
  std::uniform_real_distribution<double> mu_draw(0.01, 4.0);
  std::size_t violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t c = 2 + rng() % 6;
    std::vector<double> f(c);
    std::vector<double> g(c);
    for (double& v : f) v = score(rng);
    for (double& v : g) v = score(rng);
    if (trial % 7 == 0) f[c - 1] = f[0];
    const std::size_t y = rng() % c;
    const double mu = mu_draw(rng);
    const double lhs = ramp_loss(margin(g, argmax(f)), mu);
    const double rhs = ramp_loss(margin(f, y), mu) + ramp_loss(margin(g, y), mu);
    violations += lhs > rhs ? 1 : 0;
  }
  EXPECT_EQ(violations, 0u);
}

TEST(DisparityObjective, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor ls({5, 4});
    Tensor lt({6, 4});
    for (double& v : ls.data) v = normal(rng);
    for (double& v : lt.data) v = normal(rng);
    std::vector<int> hs(5);
    std::vector<int> ht(6);
    for (int& h : hs) h = static_cast<int>(rng() % 4);
    for (int& h : ht) h = static_cast<int>(rng() % 4);
    const double gamma = 0.3;
    const DisparityEval e = disparity_objective(ls, hs, lt, ht, gamma);
    auto value = [&](const Tensor& a, const Tensor& b) { return disparity_objective(a, hs, b, ht, gamma, false).value; };
    const double h = 1e-6;
    for (std::size_t i = 0; i < ls.size(); ++i) {
      Tensor up = ls;
      Tensor dn = ls;
      up[i] += h;
      dn[i] -= h;
      EXPECT_NEAR(e.grad_source_logits[i], (value(up, lt) - value(dn, lt)) / (2 * h), 1e-8);
    }
    for (std::size_t i = 0; i < lt.size(); ++i) {
      Tensor up = lt;
      Tensor dn = lt;
      up[i] += h;
      dn[i] -= h;
      EXPECT_NEAR(e.grad_target_logits[i], (value(ls, up) - value(ls, dn)) / (2 * h), 1e-8);
    }
  }
}

// One-layer networks whose outputs ignore the input.
Network constant_dense(std::size_t in, std::vector<double> bias) {
  const std::size_t out = bias.size();
  return Network(std::vector<Layer>{{LayerSpec::dense(in, out), Tensor({out, in}), Tensor({out}, std::move(bias))}});
}

Network pooled_generator(std::size_t channels, std::size_t width, std::uint64_t seed) {
  return Network(generator_specs(channels, width, std::vector<std::size_t>{3}, 2), seed);
}

TEST(EstimateMdd, SingleSharedPointPeaksAtMixtureDiscriminator) {
  const Network gen = pooled_generator(1, 4, 1);
  // Pseudo-label 1 from the main classifier.
  const std::vector<Network> cls{constant_dense(3, {0.0, 2.0, 0.0})};
  const Tensor x({1, 1, 4}, {0.3, -0.2, 0.9, 0.1});
  for (double gamma : {0.1, 1.0, 3.0}) {
    double best_value = -1e300;
    double best_p = 0.0;
    for (int k = 1; k < 2000; ++k) {
      const double p = k / 2000.0;
      // Two classes: p at the pseudo-label needs logit log(p / (1 - p)).
      const Network aux = constant_dense(3, {0.0, std::log(p / (1.0 - p)), -1e3});
      const double v = estimate_mdd(aux, gen, cls, x, x, gamma).value;
      EXPECT_NEAR(v, std::log(1.0 - p) + gamma * std::log(p), 1e-9);
      if (v > best_value) {
        best_value = v;
        best_p = p;
      }
    }
    EXPECT_NEAR(best_p, gamma / (1.0 + gamma), 1e-3);
  }
  const Network half = constant_dense(3, {0.0, 0.0, -1e3});
  EXPECT_NEAR(estimate_mdd(half, gen, cls, x, x, 1.0).value, -2.0 * kLn2, 1e-12);
}

TEST(EstimateMdd, MatchesBruteForceResummation) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const Network gen = pooled_generator(2, 6, trial);
    std::vector<Network> cls;
    for (std::uint64_t k = 0; k < 3; ++k) {
      cls.emplace_back(classifier_specs(3, std::vector<std::size_t>{5}, 4), 100 + trial * 10 + k);
    }
    const Network aux(classifier_specs(3, std::vector<std::size_t>{5}, 4), 999 + trial);
    Tensor src({4, 2, 6});
    Tensor tgt({4, 2, 6});
    for (double& v : src.data) v = normal(rng);
    for (double& v : tgt.data) v = normal(rng);
    const double gamma = 0.1 + 0.2 * static_cast<double>(trial);

    const std::uint64_t before = gen.fingerprint() ^ aux.fingerprint() ^ cls[0].fingerprint();
    const double got = estimate_mdd(aux, gen, cls, src, tgt, gamma).value;
    EXPECT_EQ(before, gen.fingerprint() ^ aux.fingerprint() ^ cls[0].fingerprint());

    // One sample at a time: mean softmax pseudo-label, then the two terms.
    auto term = [&](const Tensor& batch, std::size_t i, bool source) {
      Tensor one({1, 2, 6});
      std::copy(batch.row(i).begin(), batch.row(i).end(), one.data.begin());
      const Tensor f = gen.infer(one);
      std::vector<double> mean(4, 0.0);
      for (const Network& c : cls) {
        const Tensor p = softmax(c.infer(f));
        for (std::size_t j = 0; j < 4; ++j) mean[j] += p[j] / 3.0;
      }
      const std::size_t h = argmax(mean);
      const double ph = softmax(aux.infer(f))[h];
      return source ? std::log(ph) : std::log(1.0 - ph);
    };
    double ts = 0.0;
    double tt = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      ts += term(src, i, true);
      tt += term(tgt, i, false);
    }
    EXPECT_NEAR(got, tt / 4.0 + gamma * ts / 4.0, 1e-12);
  }
  const Network gen = pooled_generator(2, 6, 1);
  const Network aux(classifier_specs(3, std::vector<std::size_t>{}, 4), 2);
  const std::vector<Network> cls{aux};
  EXPECT_THROW(estimate_mdd(aux, gen, cls, Tensor(), Tensor({1, 2, 6}), 0.1), std::exception);
}

// Features equal the one-hot label scaled by 10; every head is the identity.
struct PerfectSetup {
  ModelState model;
  DatasetBundle bundle;
};

PerfectSetup perfect_setup() {
  const Network identity_conv(std::vector<Layer>{
      {LayerSpec::conv1d(2, 2, 1, 1), Tensor({2, 2, 1}, {1, 0, 0, 1}), Tensor({2})}});
  std::vector<Layer> gen_layers(identity_conv.layers().begin(), identity_conv.layers().end());
  gen_layers.push_back({LayerSpec::relu(), {}, {}});
  gen_layers.push_back({LayerSpec::global_avg_pool(), {}, {}});
  const Network head(std::vector<Layer>{{LayerSpec::dense(2, 2), Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2})}});

  PerfectSetup s;
  s.model.generator = Network(gen_layers);
  s.model.classifiers = {head, head, head};
  s.model.auxiliaries = {head, head};

  DomainDataset d;
  d.windows = Tensor({6, 2, 1});
  std::vector<int> labels;
  for (std::size_t i = 0; i < 6; ++i) {
    const int y = static_cast<int>(i % 2);
    d.windows[i * 2 + static_cast<std::size_t>(y)] = 10.0;
    labels.push_back(y);
  }
  s.bundle.class_count = 2;
  for (const char* id : {"a", "b"}) {
    DomainDataset src = d;
    src.id = id;
    src.labels = labels;
    s.bundle.sources.push_back(src);
  }
  s.bundle.target = d;
  s.bundle.target.id = "t";
  s.bundle.target.role = DomainRole::target;
  s.bundle.eval_labels = labels;
  return s;
}

TEST(BoundReport, PerfectAlignedCaseIsZero) {
  const PerfectSetup s = perfect_setup();
  const BoundReport r = empirical_bound_report(s.model, s.bundle, std::vector<double>{0.3, 0.7}, 1.0);
  EXPECT_NEAR(r.weighted_sum, 0.0, 1e-15);
  ASSERT_TRUE(r.target_error);
  EXPECT_EQ(*r.target_error, 0.0);
  EXPECT_EQ(r.omitted_terms.size(), 3u);
}

TEST(BoundReport, TermsRecombine) {
  SynthSpec spec = synth_preset("three-source");
  spec.n_per_domain = 40;
  const DatasetBundle b = synth_generate(spec);
  const ModelState m = ModelState::create(b.channels(), b.width(), b.class_count, 3, 4,
                                          Architecture{{4, 4}, 3, {8}}, {}, 5);
  const std::vector<double> alpha{0.2, 0.5, 0.3};
  const BoundReport r = empirical_bound_report(m, b, alpha, 0.5);
  double total = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(r.terms[j].alpha, alpha[j]);
    EXPECT_GE(r.terms[j].margin_loss, 0.0);
    EXPECT_LE(r.terms[j].margin_loss, 1.0);
    total += alpha[j] * (r.terms[j].margin_loss + r.terms[j].disparity);
  }
  EXPECT_NEAR(r.weighted_sum, total, 1e-12);
  const std::string json = bound_report_json(r);
  EXPECT_NE(json.find("rademacher_complexity"), std::string::npos);
  EXPECT_NE(json.find("weighted_sum"), std::string::npos);
}

}  // namespace
