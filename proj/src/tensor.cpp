#include "egean/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace egean {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return shape.empty() ? 0 : n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

double clamped_sigmoid(double x) {
  if (x > 30.0) x = 30.0;
  if (x < -30.0) x = -30.0;
  return 1.0 / (1.0 + std::exp(-x));
}

constexpr double kProbEps = 1e-12;

double clamp_prob(double p) {
  if (p < kProbEps) return kProbEps;
  if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
  return p;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool trainable) {
  Tensor t;
  t.store_ = std::make_shared<detail::TensorStore>();
  t.store_->data.assign(shape_numel(shape), 0.0);
  t.store_->shape = std::move(shape);
  t.store_->trainable = trainable;
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool trainable) {
  Tensor t = zeros(std::move(shape), trainable);
  for (double& v : t.store_->data) v = value;
  return t;
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values,
                           bool trainable) {
  if (shape_numel(shape) != values.size())
    throw std::invalid_argument("from_values: shape does not match value count");
  Tensor t;
  t.store_ = std::make_shared<detail::TensorStore>();
  t.store_->shape = std::move(shape);
  t.store_->data = std::move(values);
  t.store_->trainable = trainable;
  return t;
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::row_vector(std::vector<double> values, bool trainable) {
  std::size_t n = values.size();
  return from_values({1, n}, std::move(values), trainable);
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
  return store_->data[0];
}

void Tensor::ensure_grad() const {
  if (!store_->trainable)
    throw std::logic_error("gradient requested on a non-trainable tensor");
  if (store_->grad.empty()) store_->grad.assign(store_->data.size(), 0.0);
}

std::span<double> Tensor::grad() const {
  ensure_grad();
  return store_->grad;
}

std::span<const double> Tensor::grad_or_zero() const {
  static const std::vector<double> empty;
  if (store_->grad.empty()) return empty;
  return store_->grad;
}

void Tensor::zero_grad() {
  for (double& g : store_->grad) g = 0.0;
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::make_output(std::vector<std::size_t> shape, bool trainable) {
  return Tensor::zeros(std::move(shape), trainable);
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");
  if (backward_done_)
    throw std::logic_error("backward: tape already differentiated; re-run forward first");
  backward_done_ = true;
  if (loss.trainable()) {
    Tensor seed = loss;
    seed.grad()[0] += 1.0;
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backprop();
}

// Helper macro-free accumulation: adds contribution into t's grad if t is
// trainable, otherwise does nothing.
namespace {
inline bool wants_grad(const Tensor& t) { return t.trainable(); }
}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make_output(a.shape(), a.trainable() || b.trainable());
  auto ov = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (out.trainable()) {
    record([a, b, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      if (wants_grad(a)) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants_grad(b)) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make_output(a.shape(), a.trainable() || b.trainable());
  auto ov = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (out.trainable()) {
    record([a, b, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      if (wants_grad(a)) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants_grad(b)) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_output(a.shape(), a.trainable() || b.trainable());
  auto ov = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (out.trainable()) {
    record([a, b, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto av = a.values(), bv = b.values();
      if (wants_grad(a)) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (wants_grad(b)) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = make_output(a.shape(), a.trainable() || b.trainable());
  auto ov = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / bv[i];
  if (out.trainable()) {
    record([a, b, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto av = a.values(), bv = b.values();
      if (wants_grad(a)) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
      }
      if (wants_grad(b)) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
      }
    });
  }
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  Tensor out = make_output(a.shape(), a.trainable());
  auto ov = out.values();
  auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
  if (out.trainable()) {
    record([a, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor Tape::mul_scalar(const Tensor& a, double c) {
  Tensor out = make_output(a.shape(), a.trainable());
  auto ov = out.values();
  auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (out.trainable()) {
    record([a, out, c]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor Tape::add_rowwise(const Tensor& m, const Tensor& row) {
  if (m.rank() != 2 || row.cols() != m.cols() || row.rows() != 1)
    throw std::invalid_argument("add_rowwise: expected (n x d) matrix and width-d row");
  Tensor out = make_output(m.shape(), m.trainable() || row.trainable());
  const std::size_t n = m.rows(), d = m.cols();
  auto ov = out.values();
  auto mv = m.values(), rv = row.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) ov[r * d + c] = mv[r * d + c] + rv[c];
  if (out.trainable()) {
    record([m, row, out, n, d]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      if (wants_grad(m)) {
        auto gm = m.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (wants_grad(row)) {
        auto gr = row.grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) gr[c] += g[r * d + c];
      }
    });
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: incompatible shapes");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = make_output({n, m}, a.trainable() || b.trainable());
  auto ov = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) ov[i * m + j] += aip * bv[p * m + j];
    }
  if (out.trainable()) {
    record([a, b, out, n, k, m]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto av = a.values(), bv = b.values();
      if (wants_grad(a)) {
        auto ga = a.grad();  // dA = G * B^T
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = g[i * m + j];
            if (gij == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[p * m + j];
          }
      }
      if (wants_grad(b)) {
        auto gb = b.grad();  // dB = A^T * G
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * g[i * m + j];
          }
      }
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
  Tensor out = make_output(x.shape(), x.trainable());
  auto ov = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = clamped_sigmoid(xv[i]);
  if (out.trainable()) {
    record([x, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gx = x.grad();
      auto ov = out.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * ov[i] * (1.0 - ov[i]);
    });
  }
  return out;
}

Tensor Tape::leaky_relu(const Tensor& x, double negative_slope) {
  if (!(negative_slope > 0.0 && negative_slope < 1.0))
    throw std::invalid_argument("leaky_relu: slope must lie in (0, 1)");
  Tensor out = make_output(x.shape(), x.trainable());
  auto ov = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] = xv[i] > 0.0 ? xv[i] : negative_slope * xv[i];
  if (out.trainable()) {
    record([x, out, negative_slope]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gx = x.grad();
      auto xv = x.values();
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * (xv[i] > 0.0 ? 1.0 : negative_slope);
    });
  }
  return out;
}

Tensor Tape::softplus(const Tensor& x) {
  Tensor out = make_output(x.shape(), x.trainable());
  auto ov = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double v = xv[i];
    // log(1+exp(v)) evaluated in the numerically safe branch
    ov[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  if (out.trainable()) {
    record([x, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gx = x.grad();
      auto xv = x.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * clamped_sigmoid(xv[i]);
    });
  }
  return out;
}

Tensor Tape::stop_gradient(const Tensor& x) {
  Tensor out = make_output(x.shape(), false);
  auto ov = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i];
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("concat_cols: row counts differ");
  const std::size_t n = a.rows(), da = a.cols(), db = b.cols();
  Tensor out = make_output({n, da + db}, a.trainable() || b.trainable());
  auto ov = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < da; ++c) ov[r * (da + db) + c] = av[r * da + c];
    for (std::size_t c = 0; c < db; ++c) ov[r * (da + db) + da + c] = bv[r * db + c];
  }
  if (out.trainable()) {
    record([a, b, out, n, da, db]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      if (wants_grad(a)) {
        auto ga = a.grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < da; ++c) ga[r * da + c] += g[r * (da + db) + c];
      }
      if (wants_grad(b)) {
        auto gb = b.grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < db; ++c) gb[r * db + c] += g[r * (da + db) + da + c];
      }
    });
  }
  return out;
}

Tensor Tape::broadcast_rows(const Tensor& row, std::size_t n) {
  if (row.rows() != 1) throw std::invalid_argument("broadcast_rows: expected a single row");
  const std::size_t d = row.cols();
  Tensor out = make_output({n, d}, row.trainable());
  auto ov = out.values();
  auto rv = row.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) ov[r * d + c] = rv[c];
  if (out.trainable()) {
    record([row, out, n, d]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gr = row.grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gr[c] += g[r * d + c];
    });
  }
  return out;
}

Tensor Tape::select_rows(const Tensor& m, const std::vector<std::size_t>& row_ids) {
  if (m.rank() != 2) throw std::invalid_argument("select_rows: expected a matrix");
  const std::size_t d = m.cols();
  for (std::size_t r : row_ids)
    if (r >= m.rows()) throw std::invalid_argument("select_rows: row index out of range");
  Tensor out = make_output({row_ids.size(), d}, m.trainable());
  auto ov = out.values();
  auto mv = m.values();
  for (std::size_t i = 0; i < row_ids.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) ov[i * d + c] = mv[row_ids[i] * d + c];
  if (out.trainable()) {
    record([m, out, row_ids, d]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gm = m.grad();
      for (std::size_t i = 0; i < row_ids.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) gm[row_ids[i] * d + c] += g[i * d + c];
    });
  }
  return out;
}

Tensor Tape::lookup(const Tensor& table, const IndexMatrix& idx) {
  if (table.rank() != 2) throw std::invalid_argument("lookup: table must be a matrix");
  const std::size_t dim = table.cols();
  for (std::size_t r : idx.idx)
    if (r >= table.rows()) throw std::invalid_argument("lookup: code out of vocabulary");
  Tensor out = make_output({idx.rows, idx.cols * dim}, table.trainable());
  auto ov = out.values();
  auto tv = table.values();
  for (std::size_t r = 0; r < idx.rows; ++r)
    for (std::size_t f = 0; f < idx.cols; ++f) {
      const std::size_t src = idx.at(r, f) * dim;
      const std::size_t dst = r * idx.cols * dim + f * dim;
      for (std::size_t c = 0; c < dim; ++c) ov[dst + c] = tv[src + c];
    }
  if (out.trainable()) {
    record([table, out, idx, dim]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gt = table.grad();
      for (std::size_t r = 0; r < idx.rows; ++r)
        for (std::size_t f = 0; f < idx.cols; ++f) {
          const std::size_t dst = idx.at(r, f) * dim;
          const std::size_t src = r * idx.cols * dim + f * dim;
          for (std::size_t c = 0; c < dim; ++c) gt[dst + c] += g[src + c];
        }
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  Tensor out = make_output({1}, x.trainable());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc;
  if (out.trainable()) {
    record([x, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
    });
  }
  return out;
}

Tensor Tape::mean(const Tensor& x) {
  const double inv_n = 1.0 / static_cast<double>(x.numel());
  Tensor out = make_output({1}, x.trainable());
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc * inv_n;
  if (out.trainable()) {
    record([x, out, inv_n]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * inv_n;
    });
  }
  return out;
}

Tensor Tape::bce_elem(const Tensor& p, const Tensor& t) {
  require_same_shape(p, t, "bce_elem");
  Tensor out = make_output(p.shape(), p.trainable());
  auto ov = out.values();
  auto pv = p.values(), tv = t.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double q = clamp_prob(pv[i]);
    ov[i] = -tv[i] * std::log(q) - (1.0 - tv[i]) * std::log(1.0 - q);
  }
  if (out.trainable()) {
    record([p, t, out]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      auto gp = p.grad();
      auto pv = p.values(), tv = t.values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double q = clamp_prob(pv[i]);
        gp[i] += g[i] * (q - tv[i]) / (q * (1.0 - q));
      }
    });
  }
  return out;
}

namespace {

double sq_dist(std::span<const double> a, std::size_t ia, std::span<const double> b,
               std::size_t ib, std::size_t d) {
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = a[ia * d + c] - b[ib * d + c];
    s += diff * diff;
  }
  return s;
}

}  // namespace

Tensor Tape::mmd2_rbf(const Tensor& x, const Tensor& y, double bandwidth) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols())
    throw std::invalid_argument("mmd2_rbf: expected matrices of equal width");
  if (x.rows() == 0 || y.rows() == 0)
    throw std::invalid_argument("mmd2_rbf: sample sets must be non-empty");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("mmd2_rbf: bandwidth must be positive");
  const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
  const double inv_2s2 = 1.0 / (2.0 * bandwidth * bandwidth);
  auto xv = x.values(), yv = y.values();

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sxx += std::exp(-sq_dist(xv, i, xv, j, d) * inv_2s2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) syy += std::exp(-sq_dist(yv, i, yv, j, d) * inv_2s2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) sxy += std::exp(-sq_dist(xv, i, yv, j, d) * inv_2s2);

  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  Tensor out = make_output({1}, x.trainable() || y.trainable());
  out.values()[0] = sxx / (nn * nn) + syy / (mm * mm) - 2.0 * sxy / (nn * mm);

  if (out.trainable()) {
    record([x, y, out, n, m, d, inv_2s2]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      const double go = g[0];
      const double nn = static_cast<double>(n), mm = static_cast<double>(m);
      auto xv = x.values(), yv = y.values();
      // d k(a,b)/d a = k(a,b) * (b - a) / s^2  with k = exp(-|a-b|^2/(2 s^2))
      const double inv_s2 = 2.0 * inv_2s2;
      if (wants_grad(x)) {
        auto gx = x.grad();
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t j = 0; j < n; ++j) {
            const double k = std::exp(-sq_dist(xv, a, xv, j, d) * inv_2s2);
            const double w = go * 2.0 / (nn * nn) * k * inv_s2;
            for (std::size_t c = 0; c < d; ++c)
              gx[a * d + c] += w * (xv[j * d + c] - xv[a * d + c]);
          }
          for (std::size_t j = 0; j < m; ++j) {
            const double k = std::exp(-sq_dist(xv, a, yv, j, d) * inv_2s2);
            const double w = -go * 2.0 / (nn * mm) * k * inv_s2;
            for (std::size_t c = 0; c < d; ++c)
              gx[a * d + c] += w * (yv[j * d + c] - xv[a * d + c]);
          }
        }
      }
      if (wants_grad(y)) {
        auto gy = y.grad();
        for (std::size_t b = 0; b < m; ++b) {
          for (std::size_t j = 0; j < m; ++j) {
            const double k = std::exp(-sq_dist(yv, b, yv, j, d) * inv_2s2);
            const double w = go * 2.0 / (mm * mm) * k * inv_s2;
            for (std::size_t c = 0; c < d; ++c)
              gy[b * d + c] += w * (yv[j * d + c] - yv[b * d + c]);
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double k = std::exp(-sq_dist(yv, b, xv, j, d) * inv_2s2);
            const double w = -go * 2.0 / (nn * mm) * k * inv_s2;
            for (std::size_t c = 0; c < d; ++c)
              gy[b * d + c] += w * (xv[j * d + c] - yv[b * d + c]);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::mmd2_linear(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols())
    throw std::invalid_argument("mmd2_linear: expected matrices of equal width");
  if (x.rows() == 0 || y.rows() == 0)
    throw std::invalid_argument("mmd2_linear: sample sets must be non-empty");
  const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
  auto xv = x.values(), yv = y.values();
  std::vector<double> delta(d, 0.0);  // mean(x) - mean(y)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) delta[c] += xv[i * d + c] / static_cast<double>(n);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t c = 0; c < d; ++c) delta[c] -= yv[j * d + c] / static_cast<double>(m);
  double v = 0.0;
  for (double dv : delta) v += dv * dv;
  Tensor out = make_output({1}, x.trainable() || y.trainable());
  out.values()[0] = v;
  if (out.trainable()) {
    record([x, y, out, delta, n, m, d]() mutable {
      auto g = out.grad_or_zero();
      if (g.empty()) return;
      const double go = g[0];
      if (wants_grad(x)) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < d; ++c)
            gx[i * d + c] += go * 2.0 * delta[c] / static_cast<double>(n);
      }
      if (wants_grad(y)) {
        auto gy = y.grad();
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t c = 0; c < d; ++c)
            gy[j * d + c] -= go * 2.0 * delta[c] / static_cast<double>(m);
      }
    });
  }
  return out;
}

}  // namespace egean
