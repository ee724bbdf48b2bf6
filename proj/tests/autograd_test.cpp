#include "d2e2s/autograd.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "testutil.hpp"

using namespace d2e2s;
using ag::Mat;
using ag::Var;

TEST(Autograd, AddMulMatmulValues) {
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  Var va = ag::constant(a), vb = ag::constant(b);
  EXPECT_EQ(ag::add(va, vb).value()(0, 0), 6.0);
  EXPECT_EQ(ag::mul(va, vb).value()(1, 1), 32.0);
  EXPECT_EQ(ag::matmul(va, vb).value()(0, 0), 19.0);
  EXPECT_EQ(ag::transpose(va).value()(0, 1), 3.0);
}

TEST(Autograd, ArithmeticGradients) {
  Rng rng(7);
  Var a(testutil::random_mat(3, 4, rng), true);
  Var b(testutil::random_mat(3, 4, rng), true);
  Var w(testutil::random_mat(4, 2, rng), true);
  auto loss = [&] {
    Var h = ag::mul(ag::add(a, b), ag::sub(a, ag::scal(b, 0.5)));
    return ag::sum(ag::matmul(h, w));
  };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {a, b, w}), 1e-6);
}

TEST(Autograd, NonlinearityGradients) {
  Rng rng(11);
  Var x(testutil::random_mat(4, 3, rng, 0.2, 2.0), true);
  auto loss = [&] {
    Var y = ag::add(ag::tanh_(x), ag::sigmoid(x));
    y = ag::add(y, ag::log_(x));
    y = ag::add(y, ag::exp_(ag::scal(x, 0.3)));
    y = ag::add(y, ag::pow_scalar(x, 1.7));
    return ag::sum(y);
  };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {x}), 1e-6);
}

TEST(Autograd, GeluValuesAndGradient) {
  Mat x(1, 3);
  x << -1.0, 0.0, 2.0;
  Var v(x, true);
  Var y = ag::gelu(v);
  // gelu(x) = x * Phi(x) with Phi the standard normal CDF:
  // Phi(-1) = 0.15865525393145705, Phi(2) = 0.9772498680518208.
  EXPECT_NEAR(y.value()(0, 0), -0.15865525393145705, 1e-12);
  EXPECT_NEAR(y.value()(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(y.value()(0, 2), 2.0 * 0.9772498680518208, 1e-12);
  auto loss = [&] { return ag::sum(ag::gelu(v)); };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {v}), 1e-6);
}

TEST(Autograd, CwiseMaxValueAndGradientRouting) {
  Mat a(2, 2), b(2, 2);
  a << 1.0, 5.0, -2.0, 3.0;
  b << 4.0, 2.0, -1.0, 3.0;
  Var va(a, true), vb(b, true);
  Var y = ag::cwise_max(va, vb);
  Mat want(2, 2);
  want << 4.0, 5.0, -1.0, 3.0;
  EXPECT_EQ(y.value(), want);
  ag::sum(y).backward();
  // Ties route the gradient to the first operand.
  Mat ga(2, 2), gb(2, 2);
  ga << 0, 1, 0, 1;
  gb << 1, 0, 1, 0;
  EXPECT_EQ(va.grad(), ga);
  EXPECT_EQ(vb.grad(), gb);
}

TEST(Autograd, ReluGradientAwayFromKink) {
  Mat x(2, 2);
  x << -1.0, 2.0, 0.5, -3.0;
  Var vx(x, true);
  auto loss = [&] { return ag::sum(ag::relu(vx)); };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {vx}), 1e-6);
  loss().backward();
}

TEST(Autograd, BroadcastGradients) {
  Rng rng(13);
  Var x(testutil::random_mat(3, 4, rng), true);
  Var r(testutil::random_mat(1, 4, rng, 0.5, 1.5), true);
  Var c(testutil::random_mat(3, 1, rng, 0.5, 1.5), true);
  auto loss = [&] {
    Var y = ag::bc_add_row(x, r);
    y = ag::bc_mul_row(y, r);
    y = ag::bc_add_col(y, c);
    y = ag::bc_mul_col(y, c);
    return ag::mean(y);
  };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {x, r, c}), 1e-6);
}

TEST(Autograd, ReductionGradients) {
  Rng rng(17);
  // Entries are distinct with probability 1, keeping max pools away from ties.
  Var x(testutil::random_mat(4, 5, rng), true);
  auto loss = [&] {
    Var y = ag::add(ag::row_sum(x), ag::row_max(x));
    y = ag::add(y, ag::row_mean(x));
    return ag::add(ag::sum(y), ag::sum(ag::col_max(x)));
  };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {x}), 1e-6);
}

TEST(Autograd, MaxpoolRowsMatchesColumnwiseMax) {
  Mat x(3, 2);
  x << 1, 9, 5, 2, 3, 4;
  Var vx(x, true);
  Var pooled = ag::maxpool_rows(vx, 0, 2);
  EXPECT_EQ(pooled.value()(0, 0), 5.0);
  EXPECT_EQ(pooled.value()(0, 1), 9.0);
  ag::sum(pooled).backward();
  EXPECT_EQ(vx.grad()(1, 0), 1.0);
  EXPECT_EQ(vx.grad()(0, 1), 1.0);
  EXPECT_EQ(vx.grad()(2, 0), 0.0);
}

TEST(Autograd, RowSoftmaxRowsSumToOne) {
  Rng rng(19);
  Var x(testutil::random_mat(5, 6, rng, -3, 3), true);
  Var p = ag::row_softmax(x);
  for (int i = 0; i < 5; ++i)
    EXPECT_NEAR(p.value().row(i).sum(), 1.0, 1e-12);
  auto loss = [&] {
    // A non-symmetric functional of the softmax output.
    Rng wrng(5);
    Var w = ag::constant(testutil::random_mat(6, 1, wrng));
    return ag::sum(ag::matmul(ag::row_softmax(x), w));
  };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {x}), 1e-6);
}

TEST(Autograd, MaskedSoftmaxZeroesPaddingRowsAndColumns) {
  Rng rng(23);
  Var x(testutil::random_mat(4, 4, rng), true);
  std::vector<char> keep = {1, 1, 0, 1};
  std::vector<char> zero_row = {0, 0, 1, 0};
  Var p = ag::row_softmax(x, keep, zero_row);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p.value()(i, 2), 0.0);
    const double s = p.value().row(i).sum();
    if (zero_row[i])
      EXPECT_EQ(s, 0.0);
    else
      EXPECT_NEAR(s, 1.0, 1e-12);
  }
  auto loss = [&] {
    Rng wrng(5);
    Var w = ag::constant(testutil::random_mat(4, 1, wrng));
    return ag::sum(ag::matmul(ag::row_softmax(x, keep, zero_row), w));
  };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {x}), 1e-6);
}

TEST(Autograd, CrossEntropyUniformLogits) {
  Var logits(Mat::Zero(2, 3), true);
  Var ce = ag::cross_entropy_sum(logits, {0, 2});
  EXPECT_NEAR(ce.scalar(), 2.0 * std::log(3.0), 1e-12);
  auto loss = [&] { return ag::cross_entropy_sum(logits, {0, 2}); };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {logits}), 1e-6);
}

TEST(Autograd, ShapeOpGradients) {
  Rng rng(29);
  Var a(testutil::random_mat(3, 2, rng), true);
  Var b(testutil::random_mat(3, 3, rng), true);
  auto loss = [&] {
    Var cat = ag::concat_cols({a, b});
    Var s = ag::slice_cols(cat, 1, 3);
    Var rows = ag::concat_rows({ag::row(s, 0), ag::row(s, 2)});
    Var g = ag::gather_rows(rows, {1, 0, 1});
    return ag::sum(g);
  };
  EXPECT_LT(testutil::max_rel_grad_error(loss, {a, b}), 1e-6);
}

TEST(Autograd, DropoutMaskAndScaling) {
  Rng rng(31);
  Var x(Mat::Ones(20, 20), true);
  Var y = ag::dropout(x, 0.5, rng, true);
  ag::sum(y).backward();
  // Kept entries are scaled by 2 and receive gradient 2; dropped get 0.
  int kept = 0;
  for (Eigen::Index i = 0; i < 20; ++i) {
    for (Eigen::Index j = 0; j < 20; ++j) {
      EXPECT_EQ(y.value()(i, j), x.grad()(i, j));
      EXPECT_TRUE(y.value()(i, j) == 0.0 || y.value()(i, j) == 2.0);
      if (y.value()(i, j) != 0.0) ++kept;
    }
  }
  EXPECT_GT(kept, 120);
  EXPECT_LT(kept, 280);

  Rng rng2(31);
  Var z = ag::dropout(x, 0.0, rng2, true);
  EXPECT_EQ(z.node_.get(), x.node_.get());
  Var w = ag::dropout(x, 0.5, rng2, false);
  EXPECT_EQ(w.node_.get(), x.node_.get());
}

TEST(Autograd, GradAccumulatesAcrossBackwardCalls) {
  Var x(Mat::Ones(2, 2), true);
  ag::sum(ag::scal(x, 3.0)).backward();
  ag::sum(ag::scal(x, 2.0)).backward();
  EXPECT_EQ(x.grad()(0, 0), 5.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()(0, 0), 0.0);
}

TEST(Autograd, DeepChainDoesNotOverflowStack) {
  Var x(Mat::Ones(1, 1), true);
  Var y = x;
  for (int i = 0; i < 20000; ++i) y = ag::add_scalar(y, 1.0);
  y.backward();
  EXPECT_EQ(x.grad()(0, 0), 1.0);
  EXPECT_EQ(y.value()(0, 0), 20001.0);
}

TEST(Autograd, ConstantSubgraphIsPruned) {
  Var c = ag::constant(Mat::Ones(2, 2));
  Var x(Mat::Ones(2, 2), true);
  Var y = ag::add(ag::mul(c, c), x);
  ag::sum(y).backward();
  EXPECT_EQ(x.grad()(0, 0), 1.0);
  EXPECT_FALSE(c.requires_grad());
}
