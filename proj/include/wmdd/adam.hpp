#pragma once

#include <cstdint>
#include <vector>

#include "wmdd/nn.hpp"

namespace wmdd {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam moments for one network.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const Network& net, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  // Applies one update to `net` (descent on `grads`).
  void step(Network& net, const Gradients& grads);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor> m_weight_, v_weight_, m_bias_, v_bias_;
};

inline void adam_step(Network& net, const Gradients& grads, AdamState& state) {
  state.step(net, grads);
}

}  // namespace wmdd
