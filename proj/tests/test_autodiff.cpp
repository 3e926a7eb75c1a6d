#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "egean/optim.hpp"
#include "egean/rng.hpp"
#include "egean/tensor.hpp"
#include "test_helpers.hpp"

using namespace egean;
using egean::testing::fd_grad;
using egean::testing::grad_rel_err;
using egean::testing::worst_grad_err;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, bool trainable = true,
                     double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape), trainable);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("rng is deterministic and derive gives independent streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng d1 = c.derive("one"), d2 = c.derive("two");
  CHECK(d1.next_u64() != d2.next_u64());
  // derivation does not advance the parent
  Rng c2(42);
  (void)c2.derive("one");
  Rng e(42);
  CHECK(c2.next_u64() == e.next_u64());
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("sigmoid value and derivative at the symmetry point") {
  Tape tape;
  Tensor x = Tensor::from_values({1}, {0.0}, true);
  Tensor y = tape.sigmoid(x);
  CHECK(y.item() == doctest::Approx(0.5).epsilon(1e-12));
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sigmoid matches finite differences to 1e-6 on [-3,3]") {
  Rng rng(11);
  Tensor x = random_tensor({1, 8}, rng, true, -3.0, 3.0);
  Tensor w = random_tensor({1, 8}, rng, false);
  auto value = [&] {
    Tape t;
    return t.sum(t.mul(t.sigmoid(x), w)).item();
  };
  x.zero_grad();
  {
    Tape t;
    t.backward(t.sum(t.mul(t.sigmoid(x), w)));
  }
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double fd = fd_grad(x, i, value);
    CHECK(std::abs(x.grad()[i] - fd) <=
          1e-6 * std::max({std::abs(fd), std::abs(x.grad()[i]), 1.0}));
  }
}

TEST_CASE("leaky_relu values, slope validation and subgradient at zero") {
  Tape tape;
  Tensor x = Tensor::from_values({3}, {-1.0, 2.0, 0.0}, true);
  Tensor y = tape.leaky_relu(x, 0.2);
  CHECK(y[0] == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(y[2] == 0.0);
  tape.backward(tape.sum(y));
  CHECK(x.grad()[0] == doctest::Approx(0.2));
  CHECK(x.grad()[1] == doctest::Approx(1.0));
  // subgradient at exactly 0 is the slope
  CHECK(x.grad()[2] == doctest::Approx(0.2));

  Tape t2;
  CHECK_THROWS_AS(t2.leaky_relu(x, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(t2.leaky_relu(x, 0.0), std::invalid_argument);
}

TEST_CASE("stop_gradient severs exactly one path and is idempotent") {
  Rng rng(3);
  Tensor x = random_tensor({1, 4}, rng);
  Tensor w = random_tensor({1, 4}, rng);

  Tape tape;
  Tensor sg = tape.stop_gradient(x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(sg[i] == x[i]);
  Tensor loss = tape.sum(tape.mul(sg, w));
  tape.backward(loss);
  CHECK_FALSE(x.has_grad());
  for (std::size_t i = 0; i < w.numel(); ++i)
    CHECK(w.grad()[i] == doctest::Approx(x[i]).epsilon(1e-15));

  // double application behaves identically
  Tape t2;
  w.zero_grad();
  Tensor loss2 = t2.sum(t2.mul(t2.stop_gradient(t2.stop_gradient(x)), w));
  CHECK(loss2.item() == doctest::Approx(loss.item()).epsilon(1e-15));
  t2.backward(loss2);
  CHECK_FALSE(x.has_grad());
  for (std::size_t i = 0; i < w.numel(); ++i)
    CHECK(w.grad()[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("backward on sum gives ones; on dot gives 2x") {
  Rng rng(5);
  Tensor x = random_tensor({2, 3}, rng);
  {
    Tape tape;
    tape.backward(tape.sum(x));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 1.0);
  }
  x.zero_grad();
  {
    Tape tape;
    tape.backward(tape.sum(tape.mul(x, x)));
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(x.grad()[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-15));
  }
}

TEST_CASE("backward usage errors") {
  Tape tape;
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tensor y = tape.mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // non-scalar loss
  Tensor s = tape.sum(y);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), std::logic_error);  // second backward
}

TEST_CASE("gradient accumulation across paths is additive") {
  Rng rng(9);
  Tensor x = random_tensor({1, 4}, rng);
  Tensor w1 = random_tensor({1, 4}, rng, false);
  Tensor w2 = random_tensor({1, 4}, rng, false);

  Tape tape;
  Tensor loss = tape.add(tape.sum(tape.mul(x, w1)), tape.sum(tape.mul(x, w2)));
  tape.backward(loss);
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(w1[i] + w2[i]).epsilon(1e-15));
}

TEST_CASE("unreachable trainable tensors keep zero grads") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tensor orphan = Tensor::from_values({2}, {3.0, 4.0}, true);
  (void)orphan.grad();  // materialize
  Tape tape;
  tape.backward(tape.sum(x));
  CHECK(orphan.grad()[0] == 0.0);
  CHECK(orphan.grad()[1] == 0.0);
}

TEST_CASE("random 3-layer MLP gradients match finite differences") {
  Rng rng(17);
  Tensor x = random_tensor({4, 6}, rng, false);
  Tensor w1 = random_tensor({6, 5}, rng);
  Tensor b1 = random_tensor({5}, rng);
  Tensor w2 = random_tensor({5, 4}, rng);
  Tensor b2 = random_tensor({4}, rng);
  Tensor w3 = random_tensor({4, 1}, rng);
  Tensor b3 = random_tensor({1}, rng);
  std::vector<Tensor> params = {w1, b1, w2, b2, w3, b3};

  auto forward = [&] {
    Tape t;
    Tensor h1 = t.leaky_relu(t.add_rowwise(t.matmul(x, w1), b1), 0.2);
    Tensor h2 = t.sigmoid(t.add_rowwise(t.matmul(h1, w2), b2));
    return t.mean(t.add_rowwise(t.matmul(h2, w3), b3));
  };
  for (Tensor& p : params) p.zero_grad();
  {
    Tape t;
    Tensor h1 = t.leaky_relu(t.add_rowwise(t.matmul(x, w1), b1), 0.2);
    Tensor h2 = t.sigmoid(t.add_rowwise(t.matmul(h1, w2), b2));
    t.backward(t.mean(t.add_rowwise(t.matmul(h2, w3), b3)));
  }
  CHECK(worst_grad_err(params, [&] { return forward().item(); }) < 1e-4);
}

TEST_CASE("elementwise and shape ops match finite differences") {
  Rng rng(23);
  Tensor a = random_tensor({3, 4}, rng, true, 0.5, 2.0);
  Tensor b = random_tensor({3, 4}, rng, true, 0.5, 2.0);
  Tensor row = random_tensor({1, 4}, rng);
  Tensor table = random_tensor({6, 3}, rng);
  IndexMatrix idx{2, 2, {0, 3, 5, 1}};

  auto forward = [&] {
    Tape t;
    Tensor u = t.div(t.mul(t.sub(a, b), t.add(a, b)), t.add_scalar(b, 3.0));
    Tensor v = t.add_rowwise(u, row);
    Tensor w = t.softplus(t.mul_scalar(v, 0.7));
    Tensor lk = t.lookup(table, idx);
    Tensor cc = t.concat_cols(lk, t.broadcast_rows(row, 2));
    Tensor sel = t.select_rows(cc, {1, 0, 1});
    return t.add(t.mean(w), t.mean(sel));
  };
  std::vector<Tensor> params = {a, b, row, table};
  for (Tensor& p : params) p.zero_grad();
  {
    Tape t;
    Tensor u = t.div(t.mul(t.sub(a, b), t.add(a, b)), t.add_scalar(b, 3.0));
    Tensor v = t.add_rowwise(u, row);
    Tensor w = t.softplus(t.mul_scalar(v, 0.7));
    Tensor lk = t.lookup(table, idx);
    Tensor cc = t.concat_cols(lk, t.broadcast_rows(row, 2));
    Tensor sel = t.select_rows(cc, {1, 0, 1});
    t.backward(t.add(t.mean(w), t.mean(sel)));
  }
  CHECK(worst_grad_err(params, [&] { return forward().item(); }) < 1e-4);
}

TEST_CASE("bce_elem values and gradient") {
  Tape tape;
  Tensor p = Tensor::from_values({2}, {0.5, 0.9}, true);
  Tensor t = Tensor::from_values({2}, {1.0, 0.0});
  Tensor l = tape.bce_elem(p, t);
  CHECK(l[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l[1] == doctest::Approx(-std::log(0.1)).epsilon(1e-12));

  auto forward = [&] {
    Tape tp;
    return tp.sum(tp.bce_elem(p, t)).item();
  };
  p.zero_grad();
  {
    Tape tp;
    tp.backward(tp.sum(tp.bce_elem(p, t)));
  }
  CHECK(worst_grad_err({p}, forward) < 1e-4);
}

TEST_CASE("mmd2 ops match finite differences and closed forms") {
  Rng rng(31);
  Tensor x = random_tensor({3, 2}, rng);
  Tensor y = random_tensor({4, 2}, rng);

  SUBCASE("rbf gradient") {
    auto forward = [&] {
      Tape t;
      return t.mmd2_rbf(x, y, 1.3).item();
    };
    x.zero_grad();
    y.zero_grad();
    {
      Tape t;
      t.backward(t.mmd2_rbf(x, y, 1.3));
    }
    CHECK(worst_grad_err({x, y}, forward) < 1e-4);
  }
  SUBCASE("linear gradient") {
    auto forward = [&] {
      Tape t;
      return t.mmd2_linear(x, y).item();
    };
    x.zero_grad();
    y.zero_grad();
    {
      Tape t;
      t.backward(t.mmd2_linear(x, y));
    }
    CHECK(worst_grad_err({x, y}, forward) < 1e-4);
  }
  SUBCASE("rbf singleton closed form") {
    Tape t;
    Tensor a = Tensor::from_values({1, 2}, {0.0, 0.0});
    Tensor b = Tensor::from_values({1, 2}, {1.0, 2.0});
    const double sigma = 0.9;
    const double expected = 2.0 - 2.0 * std::exp(-5.0 / (2.0 * sigma * sigma));
    CHECK(t.mmd2_rbf(a, b, sigma).item() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("adam first step has bias-corrected magnitude lr") {
  Tensor theta = Tensor::from_values({2}, {1.0, -2.0}, true);
  AdamConfig cfg;  // defaults: lr 1e-3, betas 0.9/0.999, eps 1e-8, wd 0
  AdamOptimizer opt({theta}, cfg);
  auto g = theta.grad();
  g[0] = 1.0;
  g[1] = 1.0;
  opt.step();
  // m_hat = 1, v_hat = 1 -> delta = -lr / (1 + eps)
  const double expected = 1.0 - 1e-3 / (1.0 + 1e-8);
  CHECK(theta[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero gradients and zero weight decay is a fixed point") {
  Tensor theta = Tensor::from_values({3}, {0.5, -0.5, 2.0}, true);
  const std::vector<double> before(theta.values().begin(), theta.values().end());
  AdamOptimizer opt({theta}, AdamConfig{});
  opt.zero_grad();
  for (int i = 0; i < 5; ++i) opt.step();
  for (std::size_t i = 0; i < 3; ++i) CHECK(theta[i] == before[i]);
}

TEST_CASE("adam runs are bit-identical for the same seed") {
  auto run = [&] {
    Rng rng(99);
    Tensor theta = random_tensor({4, 4}, rng);
    AdamConfig cfg;
    cfg.weight_decay = 1e-3;
    AdamOptimizer opt({theta}, cfg);
    Tensor target = random_tensor({4, 4}, rng, false);
    for (int step = 0; step < 20; ++step) {
      opt.zero_grad();
      Tape t;
      Tensor diff = t.sub(theta, target);
      t.backward(t.sum(t.mul(diff, diff)));
      opt.step();
    }
    return std::vector<double>(theta.values().begin(), theta.values().end());
  };
  CHECK(run() == run());
}

TEST_CASE("xavier init variance, determinism and bias convention") {
  Rng rng1(1234), rng2(1234);
  Tensor w1 = xavier_init({1000, 1000}, rng1);
  Tensor w2 = xavier_init({1000, 1000}, rng2);
  CHECK(std::vector<double>(w1.values().begin(), w1.values().end()) ==
        std::vector<double>(w2.values().begin(), w2.values().end()));

  double mean = 0.0;
  for (double v : w1.values()) mean += v;
  mean /= double(w1.numel());
  double var = 0.0;
  for (double v : w1.values()) var += (v - mean) * (v - mean);
  var /= double(w1.numel() - 1);
  const double target = 2.0 / 2000.0;
  CHECK(var > 0.9 * target);
  CHECK(var < 1.1 * target);

  Rng rng3(7);
  Tensor bias = xavier_init({64}, rng3);
  for (double v : bias.values()) CHECK(v == 0.0);
}

TEST_CASE("non-trainable tensors never accumulate gradient") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, false);
  Tensor w = Tensor::from_values({2}, {3.0, 4.0}, true);
  Tape tape;
  tape.backward(tape.sum(tape.mul(x, w)));
  CHECK_FALSE(x.has_grad());
  CHECK(w.has_grad());
  CHECK_THROWS_AS((void)x.grad(), std::logic_error);
}

TEST_CASE("matmul shape errors and values") {
  Tape tape;
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_values({2, 2}, {5, 6, 7, 8});
  Tensor c = tape.matmul(a, b);
  CHECK(c[0] == 19);
  CHECK(c[1] == 22);
  CHECK(c[2] == 43);
  CHECK(c[3] == 50);
  Tensor bad = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(tape.matmul(a, bad), std::invalid_argument);
}
