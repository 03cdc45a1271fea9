// Cross-entropy, orthogonality and reconstruction losses.

#include <gtest/gtest.h>

#include <cmath>

#include "ctp/objectives.hpp"
#include "test_support.hpp"

using namespace ctp;
using ctp::testing::fd_rel_error;
using ctp::testing::param_fd_error;
using ctp::testing::random_tensor;

namespace {

double value_of(Var v) { return v.value().data[0]; }

double orth_of(const Tensor& m) {
  Tape t(Precision::f64);
  return value_of(orth_loss(t.constant(m)));
}

EncoderOutput masked_output(Tape& t, Tensor pred, Tensor target) {
  EncoderOutput e;
  e.has_masked = true;
  e.attr_pred = t.constant(std::move(pred));
  e.attr_target = std::move(target);
  return e;
}

}  // namespace

TEST(CrossEntropy, UniformLogitsGiveLnM) {
  Tape t(Precision::f64);
  const std::size_t truth[] = {0, 3, 2};
  EXPECT_NEAR(value_of(ce_loss(t.constant(Tensor(3, 4, 0.25)), truth)), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, ConfidentTruthApproachesZero) {
  Tape t(Precision::f64);
  const std::size_t truth[] = {1};
  EXPECT_LT(value_of(ce_loss(t.constant(Tensor::row({-50, 50, -50})), truth)), 1e-40);
}

TEST(CrossEntropy, HandComputedValue) {
  Tape t(Precision::f64);
  const std::size_t truth[] = {0};
  const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  EXPECT_NEAR(value_of(ce_loss(t.constant(Tensor::row({1, 0, 0})), truth)), want, 1e-12);
  EXPECT_NEAR(want, 0.5514, 1e-4);
}

TEST(CrossEntropy, IsMeanOverQueries) {
  Tape t(Precision::f64);
  const std::size_t one[] = {0};
  const std::size_t two[] = {0, 0};
  const double a = value_of(ce_loss(t.constant(Tensor::row({1, 0, 0})), one));
  const double b = value_of(ce_loss(t.constant(Tensor(2, 3, std::vector<double>{1, 0, 0, 1, 0, 0})), two));
  EXPECT_NEAR(a, b, 1e-15);
}

TEST(CrossEntropy, BadLabelsThrow) {
  Tape t(Precision::f64);
  const std::size_t out_of_range[] = {3};
  const std::size_t too_many[] = {0, 1};
  EXPECT_THROW(ce_loss(t.constant(Tensor(1, 3)), out_of_range), std::out_of_range);
  EXPECT_THROW(ce_loss(t.constant(Tensor(1, 3)), too_many), std::invalid_argument);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  const std::size_t truth[] = {2, 0, 1, 1};
  EXPECT_LT(fd_rel_error({random_tensor(4, 3, 5)}, [&](Tape&, auto& v) { return ce_loss(v[0], truth); }), 1e-6);
}

TEST(Orth, OrthonormalRowsGiveZero) {
  EXPECT_NEAR(orth_of(Tensor(3, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1})), 0.0, 1e-15);
}

TEST(Orth, IdenticalUnitRowsGiveTwo) {
  EXPECT_NEAR(orth_of(Tensor(2, 2, std::vector<double>{0.6, 0.8, 0.6, 0.8})), 2.0, 1e-12);
}

TEST(Orth, PairwiseCosineHalfGivesOnePointFive) {
  // Three unit vectors with pairwise dot 0.5.
  const double s = std::sqrt(0.5);
  const Tensor m(3, 3, std::vector<double>{s, s, 0, s, 0, s, 0, s, s});
  EXPECT_NEAR(orth_of(m), 1.5, 1e-12);
}

TEST(Orth, ZeroRowsContributeNothing) {
  EXPECT_NEAR(orth_of(Tensor(2, 3)), 0.0, 0.0);
}

TEST(Orth, ScaleAndPermutationInvariance) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor m = random_tensor(4, 6, s);
    Tensor scaled = m;
    const Tensor factors = random_tensor(4, 1, s + 100);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j) scaled.at(i, j) *= 0.1 + std::abs(factors.at(i, 0)) * 3;
    Tensor permuted(4, 6);
    const std::size_t perm[] = {2, 0, 3, 1};
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j) permuted.at(perm[i], j) = m.at(i, j);
    EXPECT_NEAR(orth_of(scaled), orth_of(m), 1e-12);
    EXPECT_NEAR(orth_of(permuted), orth_of(m), 1e-12);
  }
}

TEST(Orth, GradientDescentReachesNearOrthogonality) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Tensor m = random_tensor(4, 16, 1000 + s);
    for (int step = 0; step < 100; ++step) {
      Tape t(Precision::f64);
      Var v = t.leaf(m);
      t.backward(orth_loss(v));
      const Tensor g = t.grad(v);
      for (std::size_t i = 0; i < m.size(); ++i) m.data[i] -= 0.1 * g.data[i];
    }
    EXPECT_LT(orth_of(m), 1e-2) << "seed " << s;
  }
}

TEST(Orth, GradientMatchesFiniteDifferences) {
  EXPECT_LT(fd_rel_error({random_tensor(4, 5, 9)}, [](Tape&, auto& v) { return orth_loss(v[0]); }), 1e-6);
}

TEST(Attr, PerfectReconstructionIsZero) {
  Tape t(Precision::f64);
  const Tensor f = random_tensor(3, 4, 1);
  const EncoderOutput outs[] = {masked_output(t, f, f)};
  EXPECT_EQ(value_of(attr_loss(t, outs)), 0.0);
}

TEST(Attr, SingleNodeArithmetic) {
  Tape t(Precision::f64);
  const EncoderOutput outs[] = {masked_output(t, Tensor::row({0, 0}), Tensor::row({1, 0}))};
  EXPECT_NEAR(value_of(attr_loss(t, outs)), 0.5, 1e-15);
}

TEST(Attr, NoMaskedNodesIsZero) {
  Tape t(Precision::f64);
  std::vector<EncoderOutput> outs(3);
  EXPECT_EQ(value_of(attr_loss(t, outs)), 0.0);
  EXPECT_EQ(value_of(attr_loss(t, {})), 0.0);
}

TEST(Attr, UnmaskedContextsLeaveDenominator) {
  Tape t(Precision::f64);
  // Context A: two nodes with MSE 0.5 and 1.5, mean 1.0. Context B: one node, MSE 4. C: unmasked.
  std::vector<EncoderOutput> outs;
  outs.push_back(masked_output(t, Tensor(2, 2, std::vector<double>{0, 0, 0, 0}),
                               Tensor(2, 2, std::vector<double>{1, 0, 1, std::sqrt(2.0)})));
  outs.push_back(masked_output(t, Tensor::row({2, 2}), Tensor::row({0, 0})));
  outs.emplace_back();
  EXPECT_NEAR(value_of(attr_loss(t, outs)), (1.0 + 4.0) / 2.0, 1e-12);
}

TEST(Total, CombinesWithLambda) {
  const LossBreakdown b = total_loss(1.0, 2.0, 0.5, 0.3);
  EXPECT_NEAR(b.total, 2.1, 1e-15);
  EXPECT_EQ(total_loss(1.0, 2.0, 0.5, 0.0).total, 1.5);
  EXPECT_THROW(total_loss(1.0, 2.0, 0.5, -0.1), std::invalid_argument);
  Tape t(Precision::f64);
  LossBreakdown rec;
  Var v = total_loss(t.constant(Tensor::row({1.0})), t.constant(Tensor::row({2.0})),
                     t.constant(Tensor::row({0.5})), 0.3, &rec);
  EXPECT_NEAR(value_of(v), 2.1, 1e-15);
  EXPECT_EQ(rec.ce, 1.0);
  EXPECT_EQ(rec.orth, 2.0);
  EXPECT_EQ(rec.attr, 0.5);
  EXPECT_EQ(rec.lambda, 0.3);
}

TEST(Total, SweepRangeEndpointsAreValid) {
  for (double lambda : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    const LossBreakdown b = total_loss(0.7, 1.1, 0.2, lambda);
    EXPECT_NEAR(b.total, 0.7 + lambda * 1.1 + 0.2, 1e-15);
  }
}

namespace {

struct LossFixture {
  ModelShape shape;
  Graph g = gen_planted_partition(3, 10, 0.5, 0.1, 3, 1.0, 4);
  Episode ep;
  std::vector<ContextGraph> support, queries;

  LossFixture() {
    shape.d_in = 3;
    shape.d = 4;
    shape.attn_dim = 3;
    shape.etype_dim = 2;
    shape.mlp_hidden = 5;
    ep = sample_downstream_episode(g, 3, 2, 1, TaskKind::node, 6);
    std::uint64_t s = 0;
    for (const Labeled& l : ep.support)
      support.push_back(augment(build_context(g, l.input, 1, 5, ++s), ProtectionPlan{}, 0.0, 0.6, ++s));
    for (const Labeled& l : ep.queries) queries.push_back(build_context(g, l.input, 1, 5, ++s));
  }

  Var loss(ParamBinding& b) const {
    const EpisodeForward fw = forward_episode(b, ep, support, queries, shape);
    return total_loss(ce_loss(fw.scores.logits, fw.truth), orth_loss(fw.scores.labels),
                      attr_loss(b.tape(), fw.encoded), 0.3);
  }
};

}  // namespace

TEST(Total, EndToEndGradient64) {
  const LossFixture f;
  bool any_masked = false;
  for (const ContextGraph& c : f.support) any_masked = any_masked || !c.masked.empty();
  ASSERT_TRUE(any_masked);
  const ParamSet p = init_model_params(f.shape, 3, Precision::f64);
  EXPECT_LT(param_fd_error(p, [&](ParamBinding& b) { return f.loss(b); }), 1e-6);
}

TEST(Total, EndToEndGradient32) {
  const LossFixture f;
  const ParamSet p32 = init_model_params(f.shape, 3, Precision::f32);
  ParamSet p64(Precision::f64);
  for (const auto& [name, value] : p32.tensors()) p64.add(name, value);
  EXPECT_LT(param_fd_error(p64, [&](ParamBinding& b) { return f.loss(b); }, 20, 1, 1e-5, Precision::f32), 1e-3);
}
