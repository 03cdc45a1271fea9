// Forward semantics and gradients of the tensor ops.

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ctp/tensor.hpp"
#include "op_cases.hpp"

using namespace ctp;
using ctp::testing::fd_rel_error;
using ctp::testing::OpCase;
using ctp::testing::op_cases;
using ctp::testing::probe_sum;
using ctp::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-6;

}  // namespace

TEST(TensorGrad, EveryOpMatchesCentralDifferences) {
  for (const OpCase& c : op_cases()) {
    SCOPED_TRACE(c.name);
    EXPECT_LT(fd_rel_error(c.inputs, c.fn), kGradTol);
  }
}

TEST(TensorGrad, L2NormalizeAtSeveralRandomPoints) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const double err = fd_rel_error({random_tensor(4, 6, 100 + s)},
                                    [](Tape& t, auto& v) { return probe_sum(t, l2_normalize_rows(v[0])); });
    EXPECT_LT(err, kGradTol);
  }
}

TEST(TensorOps, CosineOfVectorWithItselfIsOne) {
  Tape t(Precision::f64);
  Var v = t.constant(Tensor::row({0.3, -2.0, 5.0}));
  EXPECT_NEAR(cosine_sim(v, v).value().data[0], 1.0, 1e-12);
}

TEST(TensorOps, ZeroRowNormalizesToZero) {
  Tape t(Precision::f64);
  Var z = t.leaf(Tensor(2, 3));
  Var n = l2_normalize_rows(z);
  for (double x : n.value().data) EXPECT_EQ(x, 0.0);
  Var c = cosine_sim(z, t.constant(Tensor::row({1.0, 0.0, 0.0})));
  EXPECT_EQ(c.value().data[0], 0.0);
  t.backward(sum_all(n));
  for (double g : t.grad(z).data) EXPECT_TRUE(std::isfinite(g));
}

TEST(TensorOps, SoftmaxOfEqualRowIsUniform) {
  Tape t(Precision::f64);
  const std::size_t m = 5;
  Var s = softmax_rows(t.constant(Tensor(1, m, 0.7)));
  for (double x : s.value().data) EXPECT_NEAR(x, 1.0 / m, 1e-15);
}

TEST(TensorOps, ShapeMismatchNamesOpAndShapes) {
  Tape t(Precision::f64);
  Var a = t.constant(Tensor(2, 3));
  Var b = t.constant(Tensor(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(TensorOps, NonFiniteOutputThrows) {
  Tape t(Precision::f64);
  Var a = t.constant(Tensor::row({1e300}));
  EXPECT_THROW(mul(a, a), NumericError);
  EXPECT_THROW(t.constant(Tensor::row({std::numeric_limits<double>::quiet_NaN()})), NumericError);
}

TEST(TensorBackward, SecondCallThrows) {
  Tape t(Precision::f64);
  Var w = t.leaf(Tensor::row({1.0, 2.0}));
  Var loss = sum_all(w);
  t.backward(loss);
  EXPECT_THROW(t.backward(loss), std::logic_error);
}

TEST(TensorBackward, NonScalarLossRejected) {
  Tape t(Precision::f64);
  Var w = t.leaf(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(t.backward(w), std::invalid_argument);
}

TEST(TensorBackward, LinearLossGradientIsBroadcastInput) {
  Tape t(Precision::f64);
  Var w = t.leaf(random_tensor(3, 4, 7));
  const Tensor x = random_tensor(4, 1, 8);
  t.backward(sum_all(matmul(w, t.constant(x))));
  const Tensor g = t.grad(w);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(g.at(r, c), x.at(c, 0));
}

TEST(TensorBackward, UnusedLeafHasZeroGradient) {
  Tape t(Precision::f64);
  Var used = t.leaf(Tensor::row({1.0, 2.0}));
  Var unused = t.leaf(Tensor::row({3.0, 4.0}));
  t.backward(sum_all(square(used)));
  EXPECT_EQ(t.grad(unused), Tensor(1, 2));
}

TEST(TensorBackward, DisabledTapeRecordsNoGradients) {
  Tape t(Precision::f64, false);
  Var w = t.leaf(Tensor::row({1.0, 2.0}));
  Var y = sum_all(square(w));
  EXPECT_FALSE(t.requires_grad(y));
}

TEST(TensorPrecision, F32RoundsEveryOutput) {
  Tape t(Precision::f32);
  Var a = t.constant(Tensor::row({0.1}));
  EXPECT_EQ(a.value().data[0], static_cast<double>(0.1f));
  Var b = scale(a, 3.0);
  EXPECT_EQ(b.value().data[0], static_cast<double>(static_cast<float>(static_cast<double>(0.1f) * 3.0)));
  Tape d(Precision::f64);
  EXPECT_EQ(d.constant(Tensor::row({0.1})).value().data[0], 0.1);
}

TEST(TensorDropout, IdentityAtRateZeroAndAtEval) {
  Tape t(Precision::f64);
  Var a = t.constant(random_tensor(3, 3, 1));
  const Tensor orig = a.value();
  const Tensor x = dropout(a, 0.0, 1, true).value();
  const Tensor y = dropout(a, 0.5, 1, false).value();
  EXPECT_EQ(x, orig);
  EXPECT_EQ(y, orig);
}

TEST(TensorDropout, DeterministicInSeed) {
  Tape t(Precision::f64);
  Var a = t.constant(random_tensor(4, 4, 1));
  const Tensor x = dropout(a, 0.5, 9, true).value();
  const Tensor y = dropout(a, 0.5, 9, true).value();
  const Tensor z = dropout(a, 0.5, 10, true).value();
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
}

TEST(TensorOps, ForwardIsBitDeterministic) {
  auto run = [] {
    Tape t(Precision::f32);
    Var a = t.constant(random_tensor(5, 7, 3));
    Var b = t.constant(random_tensor(7, 4, 4));
    return softmax_rows(matmul(a, b)).value();
  };
  EXPECT_EQ(run(), run());
}
