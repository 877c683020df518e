#include "wmdd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "wmdd/sum.hpp"

namespace wmdd {
namespace {

// sum(r * (a - b)), differencing first so outputs the perturbation did not
// reach contribute exactly zero.
double weighted_difference(const Tensor& a, const Tensor& b, const Tensor& r) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc.add(r[i] * (a[i] - b[i]));
  return acc.value();
}

// Active-set signature of every relu input recorded on the tape.
std::vector<bool> relu_pattern(const Network& net, const Tape& tape) {
  std::vector<bool> pattern;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (net.layers()[i].spec.kind != LayerKind::relu) continue;
    for (double v : tape.inputs[i].data) pattern.push_back(v > 0.0);
  }
  return pattern;
}

struct Probe {
  Tensor output;
  bool same_pattern;
};

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const Network& net, const Tensor& point, const GradCheckOptions& options) {
  ForwardResult base = net.forward(point);
  Tensor r(base.output.shape);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : r.data) v = normal(rng);

  Gradients analytic = net.backward(base.tape, r);
  if (options.tamper) options.tamper(analytic);
  const std::vector<bool> base_pattern = relu_pattern(net, base.tape);

  GradCheckReport report;
  Network work = net;
  Tensor input = point;

  auto probe = [&]() -> Probe {
    ForwardResult f = work.forward(input);
    const bool same = relu_pattern(work, f.tape) == base_pattern;
    return {std::move(f.output), same};
  };

  // `slot` yields a reference to the coordinate being perturbed.
  auto check = [&](auto&& slot, double analytic_value, const std::string& where) {
    const double original = slot();
    double numeric = 0.0;
    bool ok = false;
    for (double h = options.step; h >= options.min_step * 0.999; h /= 10.0) {
      const double up = original + h;
      const double down = original - h;
      slot() = up;
      Probe plus = probe();
      slot() = down;
      Probe minus = probe();
      slot() = original;
      if (plus.same_pattern && minus.same_pattern) {
        // Divide by the step actually taken, not the nominal one.
        numeric = weighted_difference(plus.output, minus.output, r) / (up - down);
        ok = true;
        break;
      }
    }
    if (!ok) {
      ++report.skipped_at_kinks;
      return;
    }
    ++report.checked;
    const double err = relative_error(analytic_value, numeric);
    if (report.worst.empty() || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst = where;
    }
  };

  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    if (!net.layers()[li].spec.has_params()) continue;
    const std::size_t nw = net.layers()[li].weight.size();
    for (std::size_t j = 0; j < nw; ++j) {
      check([&]() -> double& { return work.mutable_layer(li).weight[j]; }, analytic.weight[li][j],
            "layer " + std::to_string(li) + " weight[" + std::to_string(j) + "]");
    }
    const std::size_t nb = net.layers()[li].bias.size();
    for (std::size_t j = 0; j < nb; ++j) {
      check([&]() -> double& { return work.mutable_layer(li).bias[j]; }, analytic.bias[li][j],
            "layer " + std::to_string(li) + " bias[" + std::to_string(j) + "]");
    }
  }
  if (options.include_input) {
    for (std::size_t j = 0; j < input.size(); ++j) {
      check([&]() -> double& { return input[j]; }, analytic.input[j],
            "input[" + std::to_string(j) + "]");
    }
  }
  return report;
}

}  // namespace wmdd
