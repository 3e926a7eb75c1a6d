#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace egean {

// Flat row-major index block used for embedding lookups: one row of field
// codes per sample.
struct IndexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> idx;  // rows*cols entries

  std::size_t at(std::size_t r, std::size_t c) const { return idx[r * cols + c]; }
};

namespace detail {
struct TensorStore {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool trainable = false;    // participates in gradient flow
};
}  // namespace detail

// Dense 64-bit tensor, rank 1 or 2, with shared value semantics: copies of a
// Tensor alias the same storage, which is how the tape and the optimizer see
// parameter updates. The `trainable` flag marks tensors gradients flow into;
// it is set explicitly on parameters and propagated automatically through
// operations. Non-trainable tensors never allocate a gradient buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool trainable = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool trainable = false);
  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values,
                            bool trainable = false);
  static Tensor scalar(double value);
  static Tensor row_vector(std::vector<double> values, bool trainable = false);

  bool defined() const { return store_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return store_->shape; }
  std::size_t numel() const { return store_->data.size(); }
  std::size_t rank() const { return store_->shape.size(); }
  // 2-d accessors; a rank-1 tensor behaves as a single row.
  std::size_t rows() const { return rank() == 2 ? store_->shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? store_->shape[1] : numel(); }

  std::span<double> values() { return store_->data; }
  std::span<const double> values() const { return store_->data; }
  double operator[](std::size_t i) const { return store_->data[i]; }
  double& operator[](std::size_t i) { return store_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return store_->data[r * cols() + c]; }

  // Scalar extraction; throws unless numel() == 1.
  double item() const;

  bool trainable() const { return store_->trainable; }
  void set_trainable(bool t) { store_->trainable = t; }

  bool has_grad() const { return !store_->grad.empty(); }
  // Mutable gradient view; the buffer is materialized (zero-filled) on first
  // access and only for trainable tensors. Const because it mutates the
  // shared store, not the handle.
  std::span<double> grad() const;
  std::span<const double> grad_or_zero() const;
  void zero_grad();

  bool same_storage(const Tensor& other) const { return store_ == other.store_; }

 private:
  friend class Tape;
  std::shared_ptr<detail::TensorStore> store_;
  void ensure_grad() const;
};

// Records executed operations so adjoints can be replayed in reverse
// (topological order is execution order). One backward pass per forward
// pass: rebuild the graph with a fresh Tape or reset() before
// differentiating again.
class Tape {
 public:
  // Elementwise; shapes must match exactly.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);

  Tensor add_scalar(const Tensor& a, double c);
  Tensor mul_scalar(const Tensor& a, double c);

  // (n x d) matrix plus a width-d row, added to every row.
  Tensor add_rowwise(const Tensor& m, const Tensor& row);

  Tensor matmul(const Tensor& a, const Tensor& b);

  // Elementwise 1/(1+exp(-x)); the exp argument is clamped to [-30, 30] in the
  // forward pass only.
  Tensor sigmoid(const Tensor& x);
  // Elementwise max(x, slope*x); the subgradient at exactly 0 is the slope.
  // Requires slope in (0, 1).
  Tensor leaky_relu(const Tensor& x, double negative_slope);
  Tensor softplus(const Tensor& x);

  // Forward identity; backward contributes nothing to x.
  Tensor stop_gradient(const Tensor& x);

  // Column-wise concatenation of two matrices with equal row counts.
  Tensor concat_cols(const Tensor& a, const Tensor& b);

  // Repeat a single row n times.
  Tensor broadcast_rows(const Tensor& row, std::size_t n);

  // Gather a subset of rows (repetition allowed).
  Tensor select_rows(const Tensor& m, const std::vector<std::size_t>& row_ids);

  // Embedding gather: for each sample, concatenate the table rows named by
  // its index row. Output is (idx.rows x idx.cols*embed_dim).
  Tensor lookup(const Tensor& table, const IndexMatrix& idx);

  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);

  // Elementwise -t*log(p) - (1-t)*log(1-p); p is clamped to
  // [1e-12, 1-1e-12] before the logs. Gradient flows into p only.
  Tensor bce_elem(const Tensor& p, const Tensor& t);

  // Squared maximum mean discrepancy between the rows of x (n x d) and the
  // rows of y (m x d), V-statistic form. RBF kernel exp(-|a-b|^2/(2*bw^2));
  // the bandwidth is treated as a constant in backward.
  Tensor mmd2_rbf(const Tensor& x, const Tensor& y, double bandwidth);
  // Same with the linear kernel: |mean(x) - mean(y)|^2.
  Tensor mmd2_linear(const Tensor& x, const Tensor& y);

  // Populates d(loss)/d(t) for every trainable tensor reachable from the
  // scalar loss; unreachable trainable tensors keep zero gradients.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool backward_run() const { return backward_done_; }
  void reset();

 private:
  struct Node {
    std::function<void()> backprop;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;

  static Tensor make_output(std::vector<std::size_t> shape, bool trainable);
  void record(std::function<void()> fn) { nodes_.push_back({std::move(fn)}); }
};

}  // namespace egean
