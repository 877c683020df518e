#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "wmdd/nn.hpp"

namespace wmdd {

struct GradCheckOptions {
  double step = 1e-5;
  // Perturbations that flip a relu's active set are retried with step/10
  // down to this size; parameters that still straddle a kink are skipped.
  double min_step = 1e-8;
  std::uint64_t seed = 0;
  bool include_input = true;
  // Applied to the analytic gradients before comparison (checker self-test).
  std::function<void(Gradients&)> tamper;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;
  std::string worst;  // "layer i weight[j]" style locator
};

// |a - n| / max(1e-12, |a| + |n|)
double relative_error(double analytic, double numeric);

// Compares backward() against central differences of the scalar objective
// L = sum(r * net(point)), r ~ N(0, 1) drawn from `seed`.
GradCheckReport grad_check(const Network& net, const Tensor& point, const GradCheckOptions& options = {});

}  // namespace wmdd
