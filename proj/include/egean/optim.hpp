#pragma once

#include <cstdint>
#include <vector>

#include "egean/rng.hpp"
#include "egean/tensor.hpp"

namespace egean {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled: applied directly to parameters
};

// Per-parameter first/second moment buffers plus the shared step counter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
  AdamConfig config;
};

// Bias-corrected Adam with decoupled weight decay over an explicit parameter
// group. Parameters must be trainable; step() consumes their current grad
// buffers and leaves them untouched (call zero_grad() between steps).
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();

  std::uint64_t step_count() const { return state_.step; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

// Xavier/Glorot-uniform initialization: values in U(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)), giving variance 2 / (fan_in + fan_out).
// Rank-1 shapes are bias vectors and come back zero-filled.
Tensor xavier_init(std::vector<std::size_t> shape, Rng& rng, bool trainable = true);

}  // namespace egean
