// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/diff.hpp"
#include "ral/errors.hpp"
#include "ral/optim.hpp"
#include "ral/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace ral;
using namespace ral::diff;

namespace {

Tensor random_tensor(Index r, Index c, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) t(i, j) = u(rng);
  return t;
}

// Sums the op output against fixed random weights so every output entry
// reaches the loss with a distinct coefficient.
double check_op(const std::function<Var(std::span<const Var>)>& op, std::vector<Var> inputs,
                std::mt19937_64& rng) {
  Tensor w;
  auto loss = [&] {
    Var out = op(inputs);
    if (w.size() == 0) w = random_tensor(out.rows(), out.cols(), rng);
    return sum(mul(out, constant(w)));
  };
  return grad_check(loss, inputs);
}

}  // namespace

TEST_CASE("forward examples") {
  Var s = softmax_rows(constant(Tensor::Zero(1, 3)));
  CHECK(s.value().isApprox(Tensor::Constant(1, 3, 1.0 / 3.0), 1e-15));

  Var ln = layernorm_row(constant(Tensor::Ones(1, 3)));
  CHECK(ln.value().cwiseAbs().maxCoeff() == 0.0);

  Tensor a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  CHECK(matmul(constant(a), constant(b)).scalar() == 11.0);

  Tensor x(2, 3);
  x << 1, 5, 5, -1, -3, -2;
  Var m = max_rows(constant(x));
  CHECK(m.value()(0, 0) == 5.0);
  CHECK(m.value()(1, 0) == -1.0);
  Var mr = mean_rows(constant(x));
  CHECK(mr.rows() == 1);
  CHECK(mr.value()(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("forward_op dispatches every kind") {
  Tensor a(2, 2);
  a << 1, 2, 3, 4;
  Var va = constant(a);
  std::vector<Var> one{va};
  std::vector<Var> two{va, va};
  CHECK(forward_op(OpKind::matmul, two).value().isApprox(a * a));
  CHECK(forward_op(OpKind::add, two).value().isApprox(2 * a));
  CHECK(forward_op(OpKind::scale, one, 3.0).value().isApprox(3 * a));
  CHECK(forward_op(OpKind::tanh, one).value().isApprox(a.array().tanh().matrix()));
  CHECK(forward_op(OpKind::exp, one).value().isApprox(a.array().exp().matrix()));
  CHECK(forward_op(OpKind::log, one).value().isApprox(a.array().log().matrix()));
  CHECK(forward_op(OpKind::softmax_rows, one).value().rowwise().sum().isApprox(Tensor::Ones(2, 1)));
  CHECK(forward_op(OpKind::mean_rows, one).value().isApprox(a.colwise().mean()));
  CHECK(forward_op(OpKind::max_rows, one).value().isApprox(a.rowwise().maxCoeff()));
  CHECK(forward_op(OpKind::l2norm_rows, one).value().row(0).norm() == doctest::Approx(1.0));
  CHECK(forward_op(OpKind::layernorm_row, one).value().rows() == 2);
  CHECK(forward_op(OpKind::concat_rows, two).value().rows() == 4);
  CHECK(to_string(OpKind::layernorm_row) == "layernorm-row");
}

TEST_CASE("shape mismatch names both shapes") {
  Var a = constant(Tensor::Zero(2, 3));
  Var b = constant(Tensor::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(constant(Tensor::Zero(2, 3)), constant(Tensor::Zero(3, 2))), DimensionError);
  CHECK_THROWS_AS(concat_rows({constant(Tensor::Zero(1, 2)), constant(Tensor::Zero(1, 3))}),
                  DimensionError);
}

TEST_CASE("backward examples") {
  Var x = variable(Tensor::Constant(3, 1, 0.5));
  backward(sum(x));
  CHECK(x.grad().isApprox(Tensor::Ones(3, 1)));

  Var y = variable(Tensor::Constant(1, 1, 2.0));
  Var l = mul(y, y);
  backward(l);
  CHECK(y.grad()(0, 0) == 4.0);

  CHECK_THROWS_AS(backward(x), ContractError);
}

TEST_CASE("leaf gradients accumulate until zero_grad") {
  Var x = variable(Tensor::Constant(1, 1, 3.0));
  Var l = scale(x, 2.0);
  backward(l);
  backward(l);
  CHECK(x.grad()(0, 0) == 4.0);
  std::vector<Var> leaves{x};
  zero_grad(leaves);
  backward(l);
  CHECK(x.grad()(0, 0) == 2.0);
}

TEST_CASE("no graph without a variable input and under NoGradGuard") {
  Var c = tanh(constant(Tensor::Ones(2, 2)));
  CHECK_FALSE(c.requires_grad());
  Var v = variable(Tensor::Ones(2, 2));
  CHECK(tanh(v).requires_grad());
  {
    NoGradGuard guard;
    CHECK(NoGradGuard::active());
    CHECK_FALSE(tanh(v).requires_grad());
  }
  CHECK_FALSE(NoGradGuard::active());
}

TEST_CASE("every op matches central differences on [-2, 2]") {
  std::mt19937_64 rng(11);
  auto r = [&](Index a, Index b) { return variable(random_tensor(a, b, rng)); };
  auto pos = [&](Index a, Index b) { return variable(random_tensor(a, b, rng, 0.5, 2.0)); };
  using In = std::span<const Var>;
  const std::vector<Index> offsets{0, 2, 5};
  const std::vector<Window> windows{{0, 2}, {1, 3}, {4, 1}};

  CHECK(check_op([](In v) { return matmul(v[0], v[1]); }, {r(3, 4), r(4, 2)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return add(v[0], v[1]); }, {r(3, 4), r(1, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return sub(v[0], v[1]); }, {r(3, 4), r(3, 1)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return mul(v[0], v[1]); }, {r(3, 4), r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return mul(v[0], v[1]); }, {r(3, 4), r(1, 1)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return scale(v[0], -1.7); }, {r(2, 3)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return add_scalar(v[0], 0.3); }, {r(2, 3)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return tanh(v[0]); }, {r(3, 3)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return exp(v[0]); }, {r(3, 3)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return log(v[0]); }, {pos(3, 3)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return sigmoid(v[0]); }, {r(3, 3)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return transpose(v[0]); }, {r(2, 5)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return softmax_rows(v[0]); }, {r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return logsumexp_rows(v[0]); }, {r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return mean_rows(v[0]); }, {r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return max_rows(v[0]); }, {r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return mean(v[0]); }, {r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return l2norm_rows(v[0]); }, {r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return layernorm_row(v[0]); }, {r(3, 5)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return concat_rows(v); }, {r(2, 3), r(1, 3)}, rng) < 1e-4);
  CHECK(check_op([](In v) { return slice(v[0], 1, 1, 2, 2); }, {r(3, 4)}, rng) < 1e-4);
  CHECK(check_op([&](In v) { return segment_max_cols(v[0], offsets); }, {r(3, 5)}, rng) < 1e-4);
  CHECK(check_op([&](In v) { return segment_softmax(v[0], offsets); }, {r(5, 2)}, rng) < 1e-4);
  CHECK(check_op([&](In v) { return segment_sum_rows(v[0], offsets); }, {r(5, 3)}, rng) < 1e-4);
  CHECK(check_op([&](In v) { return window_means(v[0], windows); }, {r(5, 3)}, rng) < 1e-4);
}

TEST_CASE("softmax rows sum to one and layernorm standardizes") {
  std::mt19937_64 rng(3);
  Var s = softmax_rows(constant(random_tensor(6, 7, rng)));
  for (Index i = 0; i < 6; ++i) CHECK(std::abs(s.value().row(i).sum() - 1.0) < 1e-12);
  Var ln = layernorm_row(constant(random_tensor(4, 9, rng)));
  for (Index i = 0; i < 4; ++i) {
    const auto row = ln.value().row(i);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    CHECK(std::abs(mu) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);  // eps = 1e-5 inside the square root
  }
}

TEST_CASE("max_rows routes the gradient to the first argmax") {
  Tensor x(1, 4);
  x << 1, 3, 3, 2;
  Var v = variable(x);
  backward(sum(max_rows(v)));
  Tensor expect(1, 4);
  expect << 0, 1, 0, 0;
  CHECK(v.grad() == expect);
}

TEST_CASE("logsumexp ignores -inf entries") {
  Tensor x(1, 3);
  x << 0.0, -std::numeric_limits<double>::infinity(), 0.0;
  Var v = variable(x);
  Var l = sum(logsumexp_rows(v));
  CHECK(l.scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  backward(l);
  CHECK(v.grad()(0, 1) == 0.0);
  CHECK(v.grad()(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("segment ops match brute force") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(3, 6, rng);
  const std::vector<Index> offsets{0, 1, 4, 6};
  const Tensor m = segment_max_cols(constant(x), offsets).value();
  for (Index i = 0; i < 3; ++i) {
    CHECK(m(i, 0) == x(i, 0));
    CHECK(m(i, 1) == x.row(i).segment(1, 3).maxCoeff());
    CHECK(m(i, 2) == x.row(i).segment(4, 2).maxCoeff());
  }
  const Tensor y = random_tensor(6, 2, rng);
  const Tensor sm = segment_softmax(constant(y), offsets).value();
  const Tensor ss = segment_sum_rows(constant(y), offsets).value();
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const Index a = offsets[k], n = offsets[k + 1] - a;
    for (Index c = 0; c < 2; ++c) {
      const Eigen::VectorXd e = y.col(c).segment(a, n).array().exp();
      for (Index i = 0; i < n; ++i) CHECK(sm(a + i, c) == doctest::Approx(e(i) / e.sum()));
      CHECK(ss(static_cast<Index>(k), c) == doctest::Approx(y.col(c).segment(a, n).sum()));
    }
  }
}

TEST_CASE("two-layer network gradients match finite differences") {
  std::mt19937_64 rng(17);
  Var x = constant(random_tensor(5, 4, rng));
  Var w1 = variable(random_tensor(4, 6, rng));
  Var b1 = variable(random_tensor(1, 6, rng));
  Var w2 = variable(random_tensor(6, 1, rng));
  auto loss = [&] { return mean(mul(matmul(tanh(add(matmul(x, w1), b1)), w2), matmul(tanh(add(matmul(x, w1), b1)), w2))); };
  std::vector<Var> params{w1, b1, w2};
  CHECK(grad_check(loss, params) < 1e-4);
}

TEST_CASE("grad_check edge cases") {
  Var x = variable(Tensor::Constant(2, 1, 0.7));
  std::vector<Var> params{x};
  CHECK(grad_check([&] { return sum(mul(x, x)); }, params) < 1e-8);
  CHECK(grad_check([&] { return scalar_constant(3.0); }, params) == 0.0);
  CHECK_THROWS_AS(grad_check([&] { return log(scale(sum(x), -1.0)); }, params), NumericError);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterStore store;
    Parameter& p = store.add("p", Tensor::Constant(2, 2, 1.5));
    backward(scale(sum(p.var), 0.0));
    Adam adam;
    adam.step(store);
    CHECK(p.value() == Tensor::Constant(2, 2, 1.5));
  }
  SUBCASE("one step with g = 1 moves by lr") {
    ParameterStore store;
    Parameter& p = store.add("theta", Tensor::Constant(1, 1, 0.0));
    backward(sum(p.var));
    Adam adam(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    adam.step(store);
    // m_hat = 1, v_hat = 1, update = 0.1 * 1 / (1 + 1e-8)
    CHECK(p.value()(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(adam.steps() == 1);
  }
  SUBCASE("non-finite gradient aborts and names the parameter") {
    ParameterStore store;
    Parameter& a = store.add("a", Tensor::Constant(1, 1, 1.0));
    Parameter& b = store.add("bad", Tensor::Constant(1, 1, 0.0));
    backward(add(sum(a.var), sum(log(b.var))));
    Adam adam;
    try {
      adam.step(store);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
    CHECK(a.value()(0, 0) == 1.0);
    CHECK(adam.steps() == 0);
  }
  SUBCASE("identical seeded runs are bit-identical") {
    auto run = [] {
      ParameterStore store;
      auto rng = make_rng(9, "init");
      Parameter& w = store.add_uniform("w", 3, 3, 3, rng);
      Adam adam(AdamConfig{0.01});
      for (int i = 0; i < 5; ++i) {
        store.zero_grad();
        backward(sum(tanh(matmul(w.var, w.var))));
        adam.step(store);
      }
      return Tensor(w.value());
    };
    CHECK(run() == run());
  }
}

TEST_CASE("parameter store") {
  ParameterStore store;
  auto rng = make_rng(1, "init");
  Parameter& w = store.add_uniform("w", 4, 3, 4, rng);
  CHECK(w.value().cwiseAbs().maxCoeff() <= 0.5);
  CHECK(w.first_moment == Tensor::Zero(4, 3));
  CHECK_THROWS_AS(store.add("w", Tensor::Zero(1, 1)), ContractError);
  auto snap = store.snapshot();
  w.mutable_value().setZero();
  store.restore(snap);
  CHECK(w.value() == snap.at("w"));
  snap.at("w") = Tensor::Zero(2, 2);
  CHECK_THROWS_AS(store.restore(snap), DataError);
}
