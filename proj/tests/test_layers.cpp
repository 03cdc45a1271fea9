// Sage and typed attention layers, parameter binding, Adam.

#include <gtest/gtest.h>

#include <cmath>

#include "ctp/adam.hpp"
#include "ctp/layers.hpp"
#include "test_support.hpp"

using namespace ctp;
using ctp::testing::fd_rel_error;
using ctp::testing::probe_sum;
using ctp::testing::random_tensor;

namespace {

Tensor dense_sage(const Tensor& F, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                  const Tensor& ws, const Tensor& wn) {
  const std::size_t n = F.rows;
  Tensor A(n, n);
  for (auto [a, b] : pairs) {
    A.at(a, b) += 1.0;
    A.at(b, a) += 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += A.at(i, j);
    if (s > 0)
      for (std::size_t j = 0; j < n; ++j) A.at(i, j) /= s;
  }
  Tensor out(n, ws.rows);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < ws.rows; ++o) {
      double v = 0.0;
      for (std::size_t k = 0; k < F.cols; ++k) {
        v += ws.at(o, k) * F.at(i, k);
        double agg = 0.0;
        for (std::size_t j = 0; j < n; ++j) agg += A.at(i, j) * F.at(j, k);
        v += wn.at(o, k) * agg;
      }
      out.at(i, o) = std::max(0.0, v);
    }
  }
  return out;
}

struct AttnFixture {
  std::size_t d = 4, a = 3, e = 2, types = 3;
  Tensor states = random_tensor(5, 4, 1);
  Tensor w_src = random_tensor(3, 4, 2);
  Tensor w_dst = random_tensor(3, 4, 3);
  Tensor w_value = random_tensor(4, 4, 4);
  Tensor etype = random_tensor(3, 2, 5);
  Tensor score = random_tensor(8, 1, 6);
};

}  // namespace

TEST(SageLayer, IsolatedNodeUsesSelfTermOnly) {
  Tape t(Precision::f64);
  const Tensor f = Tensor::row({1.0, -2.0});
  Var out = sage_layer(t.constant(f), MessageIndex{1, {}, {}}, t.constant(Tensor(2, 2, std::vector<double>{1, 0, 0, 1})),
                       t.constant(random_tensor(2, 2, 1)));
  EXPECT_EQ(out.value(), Tensor::row({1.0, 0.0}));
}

TEST(SageLayer, SymmetricPairGivesEqualOutputs) {
  Tape t(Precision::f64);
  const std::pair<std::size_t, std::size_t> pair[] = {{0, 1}};
  Var out = sage_layer(t.constant(Tensor(2, 3, 0.5)), MessageIndex::undirected(2, pair),
                       t.constant(random_tensor(4, 3, 2)), t.constant(random_tensor(4, 3, 3)));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.value().at(0, c), out.value().at(1, c));
}

TEST(SageLayer, MatchesDenseOracle) {
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}};
  const Tensor F = random_tensor(6, 3, 10), ws = random_tensor(5, 3, 11), wn = random_tensor(5, 3, 12);
  Tape t(Precision::f64);
  Var out = sage_layer(t.constant(F), MessageIndex::undirected(6, pairs), t.constant(ws), t.constant(wn));
  const Tensor want = dense_sage(F, pairs, ws, wn);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out.value().data[i], want.data[i], 1e-6);
}

TEST(SageLayer, GradientMatchesFiniteDifferences) {
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {1, 2}, {0, 3}};
  const double err = fd_rel_error({random_tensor(5, 3, 1), random_tensor(4, 3, 2), random_tensor(4, 3, 3)},
                                  [&](Tape& t, auto& v) {
                                    return probe_sum(t, sage_layer(v[0], MessageIndex::undirected(5, pairs), v[1], v[2]));
                                  });
  EXPECT_LT(err, 1e-6);
}

TEST(SageLayer, ShapeMismatchThrows) {
  Tape t(Precision::f64);
  EXPECT_THROW(sage_layer(t.constant(Tensor(3, 2)), MessageIndex{3, {}, {}}, t.constant(Tensor(4, 3)),
                          t.constant(Tensor(4, 3))),
               std::invalid_argument);
}

TEST(TypedAttention, SingleIncomingEdgeGetsFullWeight) {
  AttnFixture f;
  Tape t(Precision::f64);
  AttentionWeights w{t.constant(f.w_src), t.constant(f.w_dst), t.constant(f.w_value), t.constant(f.etype),
                     t.constant(f.score)};
  const TypedEdge edges[] = {{2, 1, 0}};
  Var out = typed_attention_layer(t.constant(f.states), edges, w);
  for (std::size_t c = 0; c < f.d; ++c) {
    double msg = 0.0;
    for (std::size_t k = 0; k < f.d; ++k) msg += f.w_value.at(c, k) * f.states.at(2, k);
    EXPECT_NEAR(out.value().at(0, c), f.states.at(0, c) + msg, 1e-12);
  }
  // Nodes without incoming edges pass through.
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 0; c < f.d; ++c) EXPECT_EQ(out.value().at(r, c), f.states.at(r, c));
}

TEST(TypedAttention, IdenticalSourcesSplitEvenly) {
  AttnFixture f;
  for (std::size_t c = 0; c < f.d; ++c) f.states.at(3, c) = f.states.at(1, c);
  // Row 4 differs, so a non-uniform split would be visible through it.
  Tape t(Precision::f64);
  AttentionWeights w{t.constant(f.w_src), t.constant(f.w_dst), t.constant(f.w_value), t.constant(f.etype),
                     t.constant(f.score)};
  const TypedEdge edges[] = {{1, 2, 0}, {3, 2, 0}};
  Var out = typed_attention_layer(t.constant(f.states), edges, w);
  for (std::size_t c = 0; c < f.d; ++c) {
    double msg = 0.0;
    for (std::size_t k = 0; k < f.d; ++k) msg += f.w_value.at(c, k) * f.states.at(1, k);
    EXPECT_NEAR(out.value().at(0, c), f.states.at(0, c) + msg, 1e-12);
  }
}

TEST(TypedAttention, MatchesHandComputedSoftmax) {
  AttnFixture f;
  Tape t(Precision::f64);
  AttentionWeights w{t.constant(f.w_src), t.constant(f.w_dst), t.constant(f.w_value), t.constant(f.etype),
                     t.constant(f.score)};
  const TypedEdge edges[] = {{1, 0, 0}, {2, 2, 0}};
  Var out = typed_attention_layer(t.constant(f.states), edges, w);
  auto proj = [&](const Tensor& W, std::size_t row) {
    std::vector<double> r(W.rows, 0.0);
    for (std::size_t i = 0; i < W.rows; ++i)
      for (std::size_t k = 0; k < W.cols; ++k) r[i] += W.at(i, k) * f.states.at(row, k);
    return r;
  };
  double s[2];
  for (int e = 0; e < 2; ++e) {
    std::vector<double> feat = proj(f.w_src, edges[e].src);
    for (double x : proj(f.w_dst, 0)) feat.push_back(x);
    for (std::size_t k = 0; k < f.e; ++k) feat.push_back(f.etype.at(edges[e].etype, k));
    double z = 0.0;
    for (std::size_t k = 0; k < feat.size(); ++k) z += f.score.at(k, 0) * feat[k];
    s[e] = z > 0 ? z : 0.2 * z;
  }
  const double w0 = 1.0 / (1.0 + std::exp(s[1] - s[0]));
  const auto v1 = proj(f.w_value, 1), v2 = proj(f.w_value, 2);
  for (std::size_t c = 0; c < f.d; ++c)
    EXPECT_NEAR(out.value().at(0, c), f.states.at(0, c) + w0 * v1[c] + (1 - w0) * v2[c], 1e-12);
}

TEST(TypedAttention, EtypeGradientMatchesFiniteDifferences) {
  AttnFixture f;
  const std::vector<TypedEdge> edges{{1, 0, 0}, {2, 1, 0}, {3, 2, 0}, {0, 1, 4}, {2, 0, 4}};
  const double err = fd_rel_error({f.etype, f.states, f.score}, [&](Tape& t, auto& v) {
    AttentionWeights w{t.constant(f.w_src), t.constant(f.w_dst), t.constant(f.w_value), v[0], v[2]};
    return probe_sum(t, typed_attention_layer(v[1], edges, w));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(TypedAttention, UnknownEdgeTypeThrows) {
  AttnFixture f;
  Tape t(Precision::f64);
  AttentionWeights w{t.constant(f.w_src), t.constant(f.w_dst), t.constant(f.w_value), t.constant(f.etype),
                     t.constant(f.score)};
  const TypedEdge edges[] = {{1, 3, 0}};
  EXPECT_THROW(typed_attention_layer(t.constant(f.states), edges, w), std::invalid_argument);
}

TEST(ParamBinding, UnusedParameterGetsZeroGradient) {
  ParamSet p(Precision::f64);
  p.add("a", Tensor::row({1.0, 2.0}));
  p.add("b", Tensor::row({3.0}));
  Tape t(Precision::f64);
  ParamBinding bind(t, p);
  Var a = bind["a"];
  t.backward(sum_all(add(a, bind["a"])));
  const Grads g = bind.grads();
  EXPECT_EQ(g.at("a"), Tensor::row({2.0, 2.0}));
  EXPECT_EQ(g.at("b"), Tensor::row({0.0}));
}

TEST(Adam, ZeroGradientWithoutDecayIsFixedPoint) {
  ParamSet p(Precision::f64);
  p.add("w", random_tensor(3, 3, 1));
  const ParamSet before = p;
  AdamState st;
  st.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) adam_step(p, {{"w", Tensor(3, 3)}}, st);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet p(Precision::f64);
  p.add("w", Tensor::row({0.5, -1.0, 2.0}));
  AdamState st;
  st.weight_decay = 0.0;
  adam_step(p, {{"w", Tensor::row({0.3, -0.7, 4.0})}}, st);
  EXPECT_NEAR(p.get("w").data[0], 0.5 - 1e-3, 1e-6 * 1e-3 + 1e-12);
  EXPECT_NEAR(p.get("w").data[1], -1.0 + 1e-3, 1e-9);
  EXPECT_NEAR(p.get("w").data[2], 2.0 - 1e-3, 1e-9);
}

TEST(Adam, DecoupledDecayShrinksGeometrically) {
  ParamSet p(Precision::f64);
  p.add("w", Tensor::row({1.0, -4.0}));
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(p, {{"w", Tensor(1, 2)}}, st);
  const double f = std::pow(1.0 - st.lr * st.weight_decay, 3);
  EXPECT_NEAR(p.get("w").data[0], f, 1e-15);
  EXPECT_NEAR(p.get("w").data[1], -4.0 * f, 1e-14);
}

TEST(Adam, ShapeMismatchThrows) {
  ParamSet p(Precision::f64);
  p.add("w", Tensor(2, 2));
  AdamState st;
  EXPECT_THROW(adam_step(p, {{"w", Tensor(1, 2)}}, st), std::invalid_argument);
}

TEST(ParamSet, GlorotIsDeterministicAndBounded) {
  ParamSet a, b;
  a.add_glorot("w", 8, 4, 5);
  b.add_glorot("w", 8, 4, 5);
  EXPECT_EQ(a, b);
  const double lim = std::sqrt(6.0 / 12.0);
  for (double v : a.get("w").data) EXPECT_LE(std::abs(v), lim);
  EXPECT_THROW(a.add("w", Tensor(1, 1)), std::invalid_argument);
}
