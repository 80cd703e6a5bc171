#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gkmvlp/encoders.hpp"
#include "gkmvlp/errors.hpp"
#include "gkmvlp/ops.hpp"
#include "support/support.hpp"

namespace gkmvlp {
namespace {

using testing::gradcheck;
using testing::random_matrix;

constexpr double kGradTol = 1e-4;

struct OpsFixture : ::testing::Test {
  std::mt19937_64 rng{11};
  ParameterStore store;
  Parameter& make(const std::string& name, int r, int c) { return store.add(name, random_matrix(r, c, rng)); }
};

TEST_F(OpsFixture, MatmulValueAndGradient) {
  Parameter& a = make("a", 3, 4);
  Parameter& b = make("b", 4, 2);
  Graph g;
  Var out = ops::matmul(g.parameter(a), g.parameter(b));
  EXPECT_TRUE(out.value().isApprox(a.value * b.value));
  auto r = gradcheck([&](Graph& h) { return ops::sum(ops::exp(ops::scale(ops::matmul(h.parameter(a), h.parameter(b)), 0.3))); },
                     {&a, &b});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, ElementwiseAndBroadcastGradients) {
  Parameter& a = make("a", 3, 4);
  Parameter& b = make("b", 3, 4);
  Parameter& row = make("row", 1, 4);
  auto r = gradcheck(
      [&](Graph& h) {
        Var x = ops::add_row(ops::hadamard(h.parameter(a), h.parameter(b)), h.parameter(row));
        Var y = ops::sub(ops::gelu(x), ops::transpose(ops::transpose(h.parameter(b))));
        return ops::mean(ops::hadamard(y, y));
      },
      {&a, &b, &row});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, LinearMatchesAffineMap) {
  Parameter& x = make("x", 2, 3);
  Parameter& w = make("w", 3, 5);
  Parameter& b = make("b", 1, 5);
  Graph g;
  Var y = ops::linear(g.parameter(x), g.parameter(w), g.parameter(b));
  Matrix expect = x.value * w.value;
  expect.rowwise() += b.value.row(0);
  EXPECT_TRUE(y.value().isApprox(expect));
  auto r = gradcheck([&](Graph& h) { return ops::sum(ops::gelu(ops::linear(h.parameter(x), h.parameter(w), h.parameter(b)))); },
                     {&x, &w, &b});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, LayerNormNormalizesRows) {
  Parameter& x = make("x", 4, 6);
  Parameter& gain = store.add("gain", Matrix::Ones(1, 6));
  Parameter& bias = store.add("bias", Matrix::Zero(1, 6));
  Graph g;
  const Matrix y = ops::layer_norm(g.parameter(x), g.parameter(gain), g.parameter(bias)).value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR((y.row(i).array().square()).mean(), 1.0, 1e-3);
  }
  gain.value = random_matrix(1, 6, rng);
  bias.value = random_matrix(1, 6, rng);
  Parameter& w = make("w", 4, 6);
  auto r = gradcheck(
      [&](Graph& h) {
        return ops::sum(ops::hadamard(ops::layer_norm(h.parameter(x), h.parameter(gain), h.parameter(bias)),
                                      h.parameter(w)));
      },
      {&x, &gain, &bias});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, L2NormalizeGivesUnitRows) {
  Parameter& x = make("x", 3, 5);
  Parameter& w = make("w", 3, 5);
  Graph g;
  const Matrix y = ops::l2_normalize_rows(g.parameter(x)).value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) EXPECT_NEAR(y.row(i).norm(), 1.0, 1e-12);
  auto r = gradcheck(
      [&](Graph& h) { return ops::sum(ops::hadamard(ops::l2_normalize_rows(h.parameter(x)), h.parameter(w))); },
      {&x});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, RowSelectionAndConcatGradients) {
  Parameter& a = make("a", 4, 3);
  Parameter& b = make("b", 2, 3);
  Parameter& c = make("c", 4, 2);
  Parameter& row = make("row", 1, 3);
  const std::vector<int> ids{3, 0, 3, 1};
  const std::vector<bool> keep{true, false, true, true};
  auto r = gradcheck(
      [&](Graph& h) {
        Var stacked = ops::concat_rows({h.parameter(a), h.parameter(b), ops::repeat_rows(h.parameter(row), 2)});
        Var picked = ops::gather_rows(stacked, ids);
        Var masked = ops::mask_rows(picked, keep);
        Var wide = ops::concat_cols({masked, h.parameter(c)});
        Var tail = ops::rows(wide, 1, 3);
        return ops::sum(ops::exp(ops::scale(ops::add(ops::mean_rows(tail), ops::mean_rows(wide)), 0.5)));
      },
      {&a, &b, &c, &row});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, LogSumExpPickAndDivision) {
  Parameter& x = make("x", 3, 5);
  Parameter& s = store.add("s", Matrix::Constant(1, 1, 0.7));
  const std::vector<int> cols{4, 0, 2};
  Graph g;
  const Matrix lse = ops::logsumexp_rows(g.parameter(x)).value();
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(lse(i, 0), std::log(x.value.row(i).array().exp().sum()), 1e-12);
  auto r = gradcheck(
      [&](Graph& h) {
        Var z = ops::div_scalar(h.parameter(x), h.parameter(s));
        return ops::sum(ops::sub(ops::logsumexp_rows(z), ops::pick(z, cols)));
      },
      {&x, &s});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, CrossEntropyWeightsSelectRows) {
  Parameter& x = make("x", 3, 4);
  const std::vector<int> targets{1, 2, 0};
  const std::vector<double> weights{1.0, 0.0, 1.0};
  Graph g;
  const double ce = ops::cross_entropy(g.parameter(x), targets, std::span<const double>(weights)).scalar();
  double expect = 0.0;
  for (int i : {0, 2}) {
    expect += std::log(x.value.row(i).array().exp().sum()) - x.value(i, targets[static_cast<std::size_t>(i)]);
  }
  EXPECT_NEAR(ce, expect / 2.0, 1e-12);
  auto r = gradcheck([&](Graph& h) { return ops::cross_entropy(h.parameter(x), targets); }, {&x});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
  const std::vector<double> none{0.0, 0.0, 0.0};
  Graph g2;
  EXPECT_THROW(ops::cross_entropy(g2.parameter(x), targets, std::span<const double>(none)), ShapeError);
}

TEST_F(OpsFixture, BinaryCrossEntropyMatchesDefinition) {
  Parameter& x = make("x", 2, 3);
  Matrix y(2, 3);
  y << 1, 0, 1, 0, 0, 1;
  Graph g;
  const double bce = ops::binary_cross_entropy(g.parameter(x), y).scalar();
  double expect = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double z = x.value.data()[i];
    const double p = 1.0 / (1.0 + std::exp(-z));
    expect -= y.data()[i] * std::log(p) + (1.0 - y.data()[i]) * std::log(1.0 - p);
  }
  EXPECT_NEAR(bce, expect / 6.0, 1e-12);
  auto r = gradcheck([&](Graph& h) { return ops::binary_cross_entropy(h.parameter(x), y); }, {&x});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Attention, ScalarOracle) {
  Graph g(false);
  Matrix q(1, 2);
  q << 1, 0;
  const Matrix kv = Matrix::Identity(2, 2);
  Matrix weights;
  Var out = scaled_dot_attention(g.constant(q), g.constant(kv), g.constant(kv), {}, &weights);
  // softmax([1, 0] / sqrt(2))
  EXPECT_NEAR(weights(0, 0), 0.6698, 1e-4);
  EXPECT_NEAR(weights(0, 1), 0.3302, 1e-4);
  EXPECT_NEAR(out.value()(0, 0), 0.6698, 1e-4);
  EXPECT_NEAR(out.value()(0, 1), 0.3302, 1e-4);
}

TEST_F(OpsFixture, AttentionRowsAreStochastic) {
  Parameter& q = make("q", 5, 8);
  Parameter& k = make("k", 7, 8);
  Parameter& v = make("v", 7, 4);
  ops::AttentionMask mask;
  mask.key_valid = {true, false, true, true, false, true, true};
  Graph g(false);
  Matrix w;
  ops::attention(g.constant(q.value), g.constant(k.value), g.constant(v.value), 2, mask, &w);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-6);
    EXPECT_EQ(w(i, 1), 0.0);
    EXPECT_EQ(w(i, 4), 0.0);
    EXPECT_GE(w.row(i).minCoeff(), 0.0);
  }
}

TEST_F(OpsFixture, AttentionGradientWithMaskAndHeads) {
  Parameter& q = make("q", 4, 8);
  Parameter& k = make("k", 4, 8);
  Parameter& v = make("v", 4, 6);
  ops::AttentionMask mask;
  mask.key_valid = {true, true, false, true};
  mask.causal = true;
  auto r = gradcheck(
      [&](Graph& h) {
        Var o = ops::attention(h.parameter(q), h.parameter(k), h.parameter(v), 2, mask);
        return ops::sum(ops::gelu(o));
      },
      {&q, &k, &v});
  EXPECT_LE(r.max_rel_error, kGradTol) << r.worst;
}

TEST_F(OpsFixture, CausalAttentionIgnoresFutureKeys) {
  Matrix q = random_matrix(4, 4, rng);
  Matrix k = random_matrix(4, 4, rng);
  Matrix v = random_matrix(4, 4, rng);
  ops::AttentionMask mask;
  mask.causal = true;
  Graph g(false);
  const Matrix before = ops::attention(g.constant(q), g.constant(k), g.constant(v), 2, mask).value();
  k.row(3) = random_matrix(1, 4, rng);
  v.row(3) = random_matrix(1, 4, rng);
  v.row(2) = random_matrix(1, 4, rng);
  const Matrix after = ops::attention(g.constant(q), g.constant(k), g.constant(v), 2, mask).value();
  EXPECT_LE((before.topRows(2) - after.topRows(2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, AllKeysMaskedThrows) {
  Graph g(false);
  ops::AttentionMask mask;
  mask.key_valid = {false, false};
  EXPECT_THROW(ops::attention(g.constant(Matrix::Ones(1, 2)), g.constant(Matrix::Ones(2, 2)),
                              g.constant(Matrix::Ones(2, 2)), 1, mask),
               ShapeError);
}

TEST(Attention, HeadCountMustDivideWidth) {
  Graph g(false);
  EXPECT_THROW(ops::attention(g.constant(Matrix::Ones(1, 3)), g.constant(Matrix::Ones(2, 3)),
                              g.constant(Matrix::Ones(2, 3)), 2),
               ShapeError);
}

TEST(Graph, FrozenLeafReceivesNoGradient) {
  ParameterStore store;
  Parameter& a = store.add("a", Matrix::Constant(2, 2, 0.5));
  Parameter& b = store.add("b", Matrix::Constant(2, 2, 1.5));
  Graph g;
  g.backward(ops::sum(ops::hadamard(g.parameter(a), g.frozen(b))));
  EXPECT_TRUE(a.grad.isApprox(b.value));
  EXPECT_EQ(b.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Graph, ReportsFirstNonFiniteNode) {
  Graph g(false);
  Var x = g.constant(Matrix::Constant(1, 1, 1000.0), "big");
  ops::exp(x);
  EXPECT_NE(g.first_non_finite().find("exp"), std::string::npos);
}

TEST(Graph, MismatchedShapesThrow) {
  Graph g(false);
  EXPECT_THROW(ops::matmul(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(2, 3))), ShapeError);
  EXPECT_THROW(ops::add(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(3, 2))), ShapeError);
}

}  // namespace
}  // namespace gkmvlp
