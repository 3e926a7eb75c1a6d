#include "egean/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace egean {

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)) {
  state_.config = config;
  state_.m.reserve(params_.size());
  state_.v.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.defined() || !p.trainable())
      throw std::invalid_argument("AdamOptimizer: parameters must be trainable tensors");
    state_.m.emplace_back(p.numel(), 0.0);
    state_.v.emplace_back(p.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  const AdamConfig& c = state_.config;
  state_.step += 1;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    auto g = p.grad_or_zero();
    auto theta = p.values();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
      if (c.weight_decay != 0.0) theta[i] -= c.learning_rate * c.weight_decay * theta[i];
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

Tensor xavier_init(std::vector<std::size_t> shape, Rng& rng, bool trainable) {
  if (shape.size() < 2) {
    // bias convention
    return Tensor::zeros(std::move(shape), trainable);
  }
  const double fan_in = static_cast<double>(shape[0]);
  const double fan_out = static_cast<double>(shape[1]);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape), trainable);
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace egean
