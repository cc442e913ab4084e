#include <gtest/gtest.h>

#include <cmath>

#include "memcirc/errors.hpp"
#include "memcirc/tape.hpp"
#include "../support/primitive_cases.hpp"

namespace memcirc {
namespace {

TEST(Tape, SumGradientIsOnes) {
  Tape t;
  Var x = t.constant(Tensor::vector({1.0, -2.0, 5.0}));
  Var loss = t.sum(x);
  t.backward(loss);
  const Tensor g = t.grad(x);
  for (double v : g.data()) EXPECT_EQ(v, 1.0);
}

TEST(Tape, DotGradientIsOtherOperand) {
  Tape t;
  Var x = t.constant(Tensor::vector({1.0, 2.0}));
  Var y = t.constant(Tensor::vector({3.0, 4.0}));
  t.backward(t.dot(x, y));
  EXPECT_EQ(t.grad(x)[0], 3.0);
  EXPECT_EQ(t.grad(x)[1], 4.0);
  EXPECT_EQ(t.grad(y)[0], 1.0);
  EXPECT_EQ(t.grad(y)[1], 2.0);
}

TEST(Tape, UnusedValuesGetZeroGradient) {
  Tape t;
  Var x = t.constant(Tensor::vector({1.0, 2.0}));
  Var unused = t.constant(Tensor::vector({7.0, 7.0, 7.0}));
  t.backward(t.sum(x));
  const Tensor g = t.grad(unused);
  ASSERT_EQ(g.size(), 3u);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, NonScalarLossIsContractViolation) {
  Tape t;
  Var x = t.constant(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(t.backward(x), ContractViolation);
}

TEST(Tape, NanIsNumericFailureNamingOp) {
  Tape t;
  Var x = t.constant(Tensor::vector({1e308, 1e308}));
  try {
    t.scale(x, 10.0);
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos);
  }
}

TEST(Tape, ShapeMismatchIsContractViolation) {
  Tape t;
  Var a = t.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = t.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(t.matmul(a, b), ContractViolation);
  EXPECT_THROW(t.add(a, t.constant(Tensor::vector({1.0}))), ContractViolation);
}

TEST(Tape, SoftmaxOfZerosIsUniform) {
  Tape t;
  Var s = t.softmax(t.constant(Tensor({1, 2}, {0.0, 0.0})));
  EXPECT_EQ(t.value(s)[0], 0.5);
  EXPECT_EQ(t.value(s)[1], 0.5);
}

TEST(Tape, SoftmaxRowsSumToOne) {
  Rng rng(3);
  Tape t;
  Var s = t.softmax(t.constant(testing::random_tensor(rng, {20, 17}, 5.0)));
  const Tensor& p = t.value(s);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double total = 0.0;
    for (double v : p.row(r)) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Tape, LayerNormOfConstantRowIsZero) {
  Tape t;
  Var y = t.layernorm(t.constant(Tensor({1, 4}, {3.0, 3.0, 3.0, 3.0})));
  for (double v : t.value(y).data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, GeluOfZeroIsZero) {
  Tape t;
  Var y = t.gelu(t.constant(Tensor::vector({0.0})));
  EXPECT_EQ(t.value(y)[0], 0.0);
}

TEST(Tape, AttentionFirstPositionCopiesValue) {
  Rng rng(5);
  Tape t;
  Tensor q = testing::random_tensor(rng, {3, 2});
  Tensor k = testing::random_tensor(rng, {3, 2});
  Tensor v = testing::random_tensor(rng, {3, 2});
  Var out = t.causal_attention(t.constant(q), t.constant(k), t.constant(v), 1, 1, 1.0);
  EXPECT_DOUBLE_EQ(t.value(out).at(0, 0), v.at(0, 0));
  EXPECT_DOUBLE_EQ(t.value(out).at(0, 1), v.at(0, 1));
}

// Linearity: backward of L1 + L2 equals the sum of separate backwards.
TEST(Tape, BackwardIsLinearInLoss) {
  Rng rng(11);
  const Tensor x0 = testing::random_tensor(rng, {4, 5});
  const Tensor w = testing::random_tensor(rng, {5, 3});
  auto grad_of = [&](int which) {
    Tape t;
    Var x = t.constant(x0);
    Var h = t.gelu(t.matmul(x, t.constant(w)));
    Var l1 = t.sum(t.softmax(h));
    Var l2 = t.sum(t.mul(h, h));
    Var loss = which == 0 ? l1 : which == 1 ? l2 : t.add(l1, l2);
    t.backward(loss);
    return t.grad(x);
  };
  const Tensor g1 = grad_of(0);
  const Tensor g2 = grad_of(1);
  const Tensor g12 = grad_of(2);
  EXPECT_LT(max_abs_diff(g1 + g2, g12), 1e-12);
}

class PrimitiveGradient : public ::testing::TestWithParam<testing::PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  EXPECT_LT(testing::worst_rel_error(GetParam(), 20, 1234), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::ValuesIn(testing::primitive_cases()),
                         [](const auto& info) { return info.param.name; });

}  // namespace
}  // namespace memcirc
