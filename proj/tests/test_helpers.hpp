#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "egean/tensor.hpp"

namespace egean::testing {

// Central finite difference of a scalar-valued rebuild-the-graph functional
// with respect to one coordinate of a parameter tensor.
template <typename F>
double fd_grad(Tensor& p, std::size_t i, F&& forward_value, double h = 1e-5) {
  auto vals = p.values();
  const double saved = vals[i];
  vals[i] = saved + h;
  const double up = forward_value();
  vals[i] = saved - h;
  const double down = forward_value();
  vals[i] = saved;
  return (up - down) / (2.0 * h);
}

inline double grad_rel_err(double analytic, double fd) {
  const double diff = std::abs(analytic - fd);
  if (diff < 1e-8) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(fd), 1e-2});
}

// Worst relative error between the analytic gradients already accumulated on
// the parameters and central finite differences of forward_value.
template <typename F>
double worst_grad_err(std::vector<Tensor> params, F&& forward_value) {
  double worst = 0.0;
  for (Tensor& p : params) {
    auto g = p.grad_or_zero();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double analytic = g.empty() ? 0.0 : g[i];
      const double fd = fd_grad(p, i, forward_value);
      worst = std::max(worst, grad_rel_err(analytic, fd));
    }
  }
  return worst;
}

}  // namespace egean::testing
