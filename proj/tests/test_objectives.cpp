#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <set>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/gk_fusion.hpp"
#include "gkmvlp/objectives.hpp"
#include "gkmvlp/ops.hpp"
#include "support/support.hpp"

namespace gkmvlp {
namespace {

using testing::gradcheck;
using testing::random_matrix;

constexpr double kOracleTol = 1e-6;

Matrix unit_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

double itc_value(const Matrix& zi, const Matrix& zt, double temperature) {
  Graph g(false);
  return itc_loss(g.constant(zi), g.constant(zt), g.constant(Matrix::Constant(1, 1, temperature))).scalar();
}

// Closed-form values, frozen from direct evaluation of the softmax terms.
TEST(ItcOracle, SinglePairIsZero) {
  Matrix z(1, 3);
  z << 0.6, 0.8, 0.0;
  EXPECT_NEAR(itc_value(z, z, 0.07), 0.0, kOracleTol);
}

TEST(ItcOracle, IdenticalRowsGiveLogBatch) {
  Matrix z = Matrix::Zero(4, 3);
  z.col(0).setOnes();
  EXPECT_NEAR(itc_value(z, z, 0.07), std::log(4.0), kOracleTol);
}

TEST(ItcOracle, OrthonormalPairs) {
  const Matrix z = Matrix::Identity(2, 2);
  EXPECT_NEAR(itc_value(z, z, 0.07), 6.2487476e-07, 1e-12);
}

TEST(ItcProperties, SymmetricInItsArguments) {
  std::mt19937_64 rng(3);
  const Matrix a = unit_rows(random_matrix(4, 5, rng));
  const Matrix b = unit_rows(random_matrix(4, 5, rng));
  EXPECT_NEAR(itc_value(a, b, 0.1), itc_value(b, a, 0.1), 1e-12);
}

TEST(ItcProperties, InvariantToJointPermutation) {
  std::mt19937_64 rng(5);
  const Matrix a = unit_rows(random_matrix(4, 5, rng));
  const Matrix b = unit_rows(random_matrix(4, 5, rng));
  const std::vector<int> perm{2, 0, 3, 1};
  Matrix pa(4, 5), pb(4, 5);
  for (int i = 0; i < 4; ++i) {
    pa.row(i) = a.row(perm[static_cast<std::size_t>(i)]);
    pb.row(i) = b.row(perm[static_cast<std::size_t>(i)]);
  }
  EXPECT_NEAR(itc_value(a, b, 0.2), itc_value(pa, pb, 0.2), 1e-12);
}

TEST(ItcGradient, FiniteDifferences) {
  std::mt19937_64 rng(9);
  ParameterStore store;
  Parameter& a = store.add("a", random_matrix(4, 6, rng));
  Parameter& b = store.add("b", random_matrix(4, 6, rng));
  Parameter& log_t = store.add("log_t", Matrix::Constant(1, 1, std::log(0.2)));
  auto r = gradcheck(
      [&](Graph& g) {
        return itc_loss(ops::l2_normalize_rows(g.parameter(a)), ops::l2_normalize_rows(g.parameter(b)),
                        ops::exp(g.parameter(log_t)));
      },
      {&a, &b, &log_t});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

double itm_value(const Matrix& logits, const std::vector<bool>& match) {
  Graph g(false);
  return itm_loss(g.constant(logits), match).scalar();
}

TEST(ItmOracle, EqualLogitsGiveLogTwo) {
  EXPECT_NEAR(itm_value(Matrix::Zero(3, 2), {true, false, true}), std::log(2.0), kOracleTol);
}

TEST(ItmOracle, ConfidentCorrectLogits) {
  Matrix logits(2, 2);
  logits << 20, 0, 0, 20;
  EXPECT_NEAR(itm_value(logits, {true, false}), 2.0611536e-09, 1e-12);
}

TEST(ItmGradient, FiniteDifferences) {
  std::mt19937_64 rng(4);
  ParameterStore store;
  Parameter& x = store.add("x", random_matrix(4, 2, rng));
  const std::vector<bool> match{true, false, false, true};
  auto r = gradcheck([&](Graph& g) { return itm_loss(g.parameter(x), match); }, {&x});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

double lm_value(const Matrix& logits, const std::vector<int>& targets, const std::vector<bool>& mask) {
  Graph g(false);
  return lm_loss(g.constant(logits), targets, mask).scalar();
}

TEST(LmOracle, UniformLogitsGiveLogVocab) {
  EXPECT_NEAR(lm_value(Matrix::Zero(5, 10), {1, 4, 9, 0, 3}, std::vector<bool>(5, true)), std::log(10.0),
              kOracleTol);
}

TEST(LmOracle, TwoClassCase) {
  Matrix logits(2, 2);
  logits << 0.0, std::log(3.0), 0.0, std::log(3.0);
  EXPECT_NEAR(lm_value(logits, {1, 1}, {true, true}), 0.28768207, 1e-8);
}

TEST(LmProperties, MaskedPositionsDoNotCount) {
  Matrix logits = Matrix::Zero(3, 4);
  logits(2, 0) = 50.0;
  EXPECT_NEAR(lm_value(logits, {0, 1, 3}, {true, true, false}), std::log(4.0), 1e-12);
}

TEST(LmGradient, FiniteDifferences) {
  std::mt19937_64 rng(8);
  ParameterStore store;
  Parameter& x = store.add("x", random_matrix(4, 6, rng));
  const std::vector<int> targets{5, 0, 2, 2};
  const std::vector<bool> mask{true, true, false, true};
  auto r = gradcheck([&](Graph& g) { return lm_loss(g.parameter(x), targets, mask); }, {&x});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

double ecls_value(const Matrix& v, const Matrix& pos, const Matrix& neg, const std::vector<bool>& labels_in,
                  double tau) {
  std::unique_ptr<bool[]> labels(new bool[labels_in.size()]);
  std::copy(labels_in.begin(), labels_in.end(), labels.get());
  Graph g(false);
  return ecls_loss(g.constant(v), g.constant(pos), g.constant(neg),
                   std::span<const bool>(labels.get(), labels_in.size()), tau)
      .scalar();
}

TEST(EclsOracle, SingleEntityEqualCosines) {
  Matrix v(1, 2);
  v << 1, 0;
  Matrix e(1, 2);
  e << 0, 1;
  EXPECT_NEAR(ecls_value(v, e, e, {true}, 0.2), std::log(2.0), kOracleTol);
}

TEST(EclsContract, SampleWithoutPositiveEntityContributesZero) {
  Matrix v(1, 2);
  v << 1, 0;
  Matrix e(1, 2);
  e << 0, 1;
  EXPECT_EQ(ecls_value(v, e, e, {false}, 0.2), 0.0);
}

TEST(EclsOracle, FourteenEntitiesAllEqual) {
  Matrix v(1, 3);
  v << 0, 0, 1;
  Matrix e = Matrix::Zero(kNumEntities, 3);
  e.col(0).setOnes();
  std::vector<bool> labels(kNumEntities, false);
  labels[2] = labels[7] = true;
  EXPECT_NEAR(ecls_value(v, e, e, labels, 0.2), 3.33220451, 1e-8);
}

TEST(EclsOracle, SeparatedPair) {
  Matrix v(1, 2);
  v << 1, 0;
  Matrix pos(1, 2);
  pos << 1, 0;
  Matrix neg(1, 2);
  neg << -1, 0;
  EXPECT_NEAR(ecls_value(v, pos, neg, {true}, 0.2), 4.5399e-05, 1e-9);
}

TEST(EclsContract, RejectsNonPositiveTemperature) {
  Matrix v = Matrix::Ones(1, 2);
  EXPECT_THROW(ecls_value(v, v, v, {true}, 0.0), ConfigError);
}

TEST(EclsGradient, FiniteDifferences) {
  std::mt19937_64 rng(12);
  ParameterStore store;
  Parameter& v = store.add("v", random_matrix(1, 6, rng));
  Parameter& pos = store.add("pos", random_matrix(5, 6, rng));
  Parameter& neg = store.add("neg", random_matrix(5, 6, rng));
  const bool labels[5] = {true, false, false, true, false};
  auto r = gradcheck(
      [&](Graph& g) {
        return ecls_loss(ops::l2_normalize_rows(g.parameter(v)), ops::l2_normalize_rows(g.parameter(pos)),
                         ops::l2_normalize_rows(g.parameter(neg)), labels, 0.2);
      },
      {&v, &pos, &neg});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

TEST(TotalLoss, WeightedSum) {
  LossWeights w;
  EXPECT_NEAR(total_loss(0.5, 0.25, 0.125, 0.1, w), 0.975, 1e-12);
  w.itm = 2.0;
  w.lm = 0.5;
  w.ecls = 0.0;
  EXPECT_NEAR(total_loss(0.5, 0.25, 0.125, 0.1, w), 0.5 + 0.5 + 0.0625, 1e-12);
  Graph g(false);
  auto c = [&](double x) { return g.constant(Matrix::Constant(1, 1, x)); };
  EXPECT_NEAR(total_loss(c(0.5), c(0.25), c(0.125), c(0.1), w).scalar(), 1.0625, 1e-12);
}

TEST(Derangement, HasNoFixedPointAndIsAPermutation) {
  std::mt19937_64 rng(1);
  for (int n = 2; n <= 9; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      const std::vector<int> d = random_derangement(n, rng);
      ASSERT_EQ(static_cast<int>(d.size()), n);
      std::set<int> seen(d.begin(), d.end());
      EXPECT_EQ(static_cast<int>(seen.size()), n);
      for (int i = 0; i < n; ++i) EXPECT_NE(d[static_cast<std::size_t>(i)], i);
    }
  }
  EXPECT_THROW(random_derangement(1, rng), ValidationError);
}

}  // namespace
}  // namespace gkmvlp
