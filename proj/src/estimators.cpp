#include "egean/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace egean {

namespace {

double floored_propensity(double p, ClampCounter* clamp) {
  if (p < kPropensityFloor) {
    if (clamp) clamp->events += 1;
    return kPropensityFloor;
  }
  return p;
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

std::size_t EstimatorBatch::clicked_count() const {
  std::size_t n = 0;
  for (double v : o) n += v != 0.0 ? 1 : 0;
  return n;
}

void EstimatorBatch::compute_errors() {
  e.assign(size(), 0.0);
  e_mask.assign(size(), 0);
  for (std::size_t i = 0; i < size(); ++i) {
    if (i < r_mask.size() && r_mask[i]) {
      e[i] = ce_delta(r[i], r_hat[i]);
      e_mask[i] = 1;
    }
  }
}

void EstimatorBatch::validate() const {
  require(!o.empty(), "EstimatorBatch: empty sample set");
  const std::size_t n = o.size();
  auto check_len = [n](const auto& v, const char* msg) {
    if (!v.empty() && v.size() != n) throw std::invalid_argument(msg);
  };
  check_len(p_hat, "EstimatorBatch: p_hat length mismatch");
  check_len(r, "EstimatorBatch: r length mismatch");
  check_len(r_mask, "EstimatorBatch: r_mask length mismatch");
  check_len(r_hat, "EstimatorBatch: r_hat length mismatch");
  check_len(e_hat, "EstimatorBatch: e_hat length mismatch");
  check_len(e, "EstimatorBatch: e length mismatch");
  check_len(e_mask, "EstimatorBatch: e_mask length mismatch");
  for (double v : o)
    require(v == 0.0 || v == 1.0, "EstimatorBatch: o must be 0 or 1");
  for (double p : p_hat)
    require(p > 0.0, "EstimatorBatch: propensities must be strictly positive");
  if (!e.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      if (o[i] == 1.0)
        require(e_mask.empty() || e_mask[i], "EstimatorBatch: e undefined on a clicked pair");
  }
}

double ce_delta(double r, double r_hat) {
  constexpr double eps = 1e-12;
  const double q = std::clamp(r_hat, eps, 1.0 - eps);
  return -r * std::log(q) - (1.0 - r) * std::log(1.0 - q);
}

double ideal_loss(const EstimatorBatch& b) {
  require(!b.o.empty(), "ideal_loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.r_mask.empty() || !b.r_mask[i])
      throw std::invalid_argument("ideal_loss: r must be defined for every pair");
    acc += ce_delta(b.r[i], b.r_hat[i]);
  }
  return acc / static_cast<double>(b.size());
}

double naive_loss(const EstimatorBatch& b, ClampCounter* clamp) {
  (void)clamp;  // no division in the naive form
  require(!b.o.empty(), "naive_loss: empty batch");
  double acc = 0.0;
  std::size_t clicked = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.o[i] == 0.0) continue;
    acc += b.e[i];
    clicked += 1;
  }
  if (clicked == 0) throw std::domain_error("naive_loss: undefined, no clicked pairs");
  return acc / static_cast<double>(clicked);
}

double pvdr_loss(const EstimatorBatch& b, double lambda, ClampCounter* clamp) {
  require(!b.o.empty(), "pvdr_loss: empty batch");
  double numer = 0.0;
  double weight_sum = 0.0;
  std::size_t clicked = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.o[i] == 0.0) continue;
    const double p = floored_propensity(b.p_hat[i], clamp);
    numer += b.e[i] / p;
    weight_sum += 1.0 / p;
    clicked += 1;
  }
  if (clicked == 0 && lambda == 0.0)
    throw std::domain_error("pvdr_loss: undefined at lambda=0 with no clicked pairs");
  const double denom =
      lambda * static_cast<double>(b.size()) + (1.0 - lambda) * weight_sum;
  return numer / denom;
}

double steady_state_residual(const EstimatorBatch& b, double lambda, ClampCounter* clamp) {
  require(!b.o.empty(), "steady_state_residual: empty batch");
  require(b.e_hat.size() == b.size(), "steady_state_residual: e_hat must cover every pair");
  double a = 0.0;
  double weighted_e_hat = 0.0;
  double e_hat_sum = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double p = floored_propensity(b.p_hat[i], clamp);
    a += b.o[i] / p;
    weighted_e_hat += b.o[i] * b.e_hat[i] / p;
    e_hat_sum += b.e_hat[i];
  }
  if (e_hat_sum <= 0.0)
    throw std::domain_error("steady_state_residual: sum of imputed errors is zero");
  a /= static_cast<double>(b.size());
  const double ratio = weighted_e_hat / e_hat_sum;
  return lambda + (1.0 - lambda) * a - ratio;
}

double dr_loss(const EstimatorBatch& b, ClampCounter* clamp) {
  require(!b.o.empty(), "dr_loss: empty batch");
  require(b.e_hat.size() == b.size(), "dr_loss: e_hat must cover every pair");
  double acc = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    acc += b.e_hat[i];
    if (b.o[i] != 0.0) {
      const double p = floored_propensity(b.p_hat[i], clamp);
      acc += (b.e[i] - b.e_hat[i]) / p;
    }
  }
  return acc / static_cast<double>(b.size());
}

double imputation_mean(const EstimatorBatch& b) {
  require(!b.o.empty(), "imputation_mean: empty batch");
  require(b.e_hat.size() == b.size(), "imputation_mean: e_hat must cover every pair");
  double acc = 0.0;
  for (double v : b.e_hat) acc += v;
  return acc / static_cast<double>(b.size());
}

double imputation_training_loss(const EstimatorBatch& b, ClampCounter* clamp) {
  require(!b.o.empty(), "imputation_training_loss: empty batch");
  require(b.e_hat.size() == b.size(), "imputation_training_loss: e_hat must cover every pair");
  double acc = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.o[i] == 0.0) continue;
    const double p = floored_propensity(b.p_hat[i], clamp);
    const double diff = b.e_hat[i] - b.e[i];
    acc += diff * diff / p;
  }
  return acc / static_cast<double>(b.size());
}

// ---------------------------------------------------------------------------
// MMD

SampleMatrix SampleMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  SampleMatrix m;
  m.n = rows.size();
  m.d = rows.empty() ? 0 : rows[0].size();
  m.values.reserve(m.n * m.d);
  for (const auto& row : rows) {
    if (row.size() != m.d)
      throw std::invalid_argument("SampleMatrix: ragged rows");
    m.values.insert(m.values.end(), row.begin(), row.end());
  }
  return m;
}

namespace {

double row_sq_dist(const SampleMatrix& a, std::size_t i, const SampleMatrix& b,
                   std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.d; ++c) {
    const double diff = a.values[i * a.d + c] - b.values[j * b.d + c];
    s += diff * diff;
  }
  return s;
}

double mean_rbf(const SampleMatrix& a, const SampleMatrix& b, double inv_2s2) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < b.n; ++j) s += std::exp(-row_sq_dist(a, i, b, j) * inv_2s2);
  return s / (static_cast<double>(a.n) * static_cast<double>(b.n));
}

double dot_rows(const SampleMatrix& a, std::size_t i, const SampleMatrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.d; ++c) s += a.values[i * a.d + c] * b.values[j * b.d + c];
  return s;
}

double mean_linear(const SampleMatrix& a, const SampleMatrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < b.n; ++j) s += dot_rows(a, i, b, j);
  return s / (static_cast<double>(a.n) * static_cast<double>(b.n));
}

}  // namespace

double median_heuristic_bandwidth(const SampleMatrix& x, const SampleMatrix& y) {
  std::vector<double> dists;
  const std::size_t total = x.n + y.n;
  dists.reserve(total * (total - 1) / 2);
  auto row = [&](std::size_t i) {
    return i < x.n ? &x.values[i * x.d] : &y.values[(i - x.n) * y.d];
  };
  const std::size_t d = x.d;
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j) {
      const double* a = row(i);
      const double* b = row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
      dists.push_back(std::sqrt(s));
    }
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  return std::max(dists[dists.size() / 2], 1e-9);
}

double mmd2(const SampleMatrix& x, const SampleMatrix& y, const KernelSpec& kernel) {
  if (x.n == 0 || y.n == 0) throw std::invalid_argument("mmd2: sample sets must be non-empty");
  if (x.d != y.d) throw std::invalid_argument("mmd2: feature widths differ");
  if (kernel.kind == KernelKind::Linear)
    return mean_linear(x, x) + mean_linear(y, y) - 2.0 * mean_linear(x, y);
  const double bw =
      kernel.bandwidth > 0.0 ? kernel.bandwidth : median_heuristic_bandwidth(x, y);
  const double inv_2s2 = 1.0 / (2.0 * bw * bw);
  return mean_rbf(x, x, inv_2s2) + mean_rbf(y, y, inv_2s2) - 2.0 * mean_rbf(x, y, inv_2s2);
}

}  // namespace egean
