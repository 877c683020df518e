#include "wmdd/adam.hpp"

#include <cmath>

#include "wmdd/errors.hpp"

namespace wmdd {

AdamState::AdamState(const Network& net, AdamConfig config) : config_(config) {
  for (const Layer& l : net.layers()) {
    const bool p = l.spec.has_params();
    m_weight_.push_back(p ? Tensor(l.weight.shape) : Tensor());
    v_weight_.push_back(p ? Tensor(l.weight.shape) : Tensor());
    m_bias_.push_back(p ? Tensor(l.bias.shape) : Tensor());
    v_bias_.push_back(p ? Tensor(l.bias.shape) : Tensor());
  }
}

void AdamState::step(Network& net, const Gradients& grads) {
  if (grads.weight.size() != net.layer_count() || m_weight_.size() != net.layer_count()) {
    throw ShapeError("adam: gradient/state layer count mismatch");
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;

  auto update = [&](Tensor& param, const Tensor& g, Tensor& m, Tensor& v) {
    if (g.size() != param.size()) throw ShapeError("adam: gradient shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  };

  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (!net.layers()[i].spec.has_params()) continue;
    Layer& layer = net.mutable_layer(i);
    update(layer.weight, grads.weight[i], m_weight_[i], v_weight_[i]);
    update(layer.bias, grads.bias[i], m_bias_[i], v_bias_[i]);
  }
}

}  // namespace wmdd
