#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gkmvlp/errors.hpp"
#include "gkmvlp/metrics.hpp"
#include "gkmvlp/tokenizer.hpp"

namespace gkmvlp {
namespace {

// Values frozen from an independent dynamic-programming and n-gram count
// implementation.
struct TextCase {
  const char* candidate;
  const char* reference;
  double bleu4;
  double rouge_l;
};

const TextCase kTextCases[] = {
    {"the heart is normal in size", "the heart size is normal", 0.0, 0.7333333333333333},
    {"effusion is located at left costophrenic angle .", "effusion is located at right costophrenic angle .", 0.5,
     0.8750000000000001},
    {"no abnormality is found", "no abnormality is found", 1.0, 1.0},
    {"mass is located at right hilar structure and left hilar structure", "mass is located at right hilar structure",
     0.5706745777055999, 0.7938144329896908},
    {"a b c d e f g", "g f e d c b a", 0.0, 0.14285714285714285},
};
constexpr double kCorpusBleu = 0.4662661767700935;
constexpr double kMeanRouge = 0.7090009818360333;

TEST(TextMetrics, FixedPairsMatchOracle) {
  for (const TextCase& c : kTextCases) {
    const TextScores s = text_metrics({c.candidate}, {c.reference});
    EXPECT_NEAR(s.bleu4, c.bleu4, 1e-6) << c.candidate;
    EXPECT_NEAR(s.rouge_l, c.rouge_l, 1e-6) << c.candidate;
  }
}

TEST(TextMetrics, CorpusAggregates) {
  std::vector<std::string> cands, refs;
  for (const TextCase& c : kTextCases) {
    cands.emplace_back(c.candidate);
    refs.emplace_back(c.reference);
  }
  const TextScores s = text_metrics(cands, refs);
  EXPECT_NEAR(s.bleu4, kCorpusBleu, 1e-6);
  EXPECT_NEAR(s.rouge_l, kMeanRouge, 1e-6);
}

TEST(Bleu, OneWrongFinalWord) {
  EXPECT_NEAR(corpus_bleu4({{"a", "b", "c", "d", "e"}}, {{"a", "b", "c", "d", "f"}}), std::pow(0.2, 0.25), 1e-12);
}

TEST(Bleu, BrevityPenaltyAppliesToShortCandidates) {
  const std::vector<std::string> ref{"a", "b", "c", "d", "e", "f", "g", "h"};
  const std::vector<std::string> cand{"a", "b", "c", "d"};
  EXPECT_NEAR(corpus_bleu4({cand}, {ref}), std::exp(1.0 - 8.0 / 4.0), 1e-12);
}

TEST(Bleu, ClipsRepeatedWords) {
  // unigram precision 2/7; no bigram match
  EXPECT_EQ(corpus_bleu4({{"the", "the", "the", "the", "the", "the", "the"}}, {{"the", "cat", "the", "mat"}}), 0.0);
}

TEST(Bleu, BoundedAndPermutationInvariantAcrossPairs) {
  std::vector<std::vector<std::string>> c, r;
  for (const TextCase& t : kTextCases) {
    c.push_back(split_words(t.candidate));
    r.push_back(split_words(t.reference));
  }
  const double base = corpus_bleu4(c, r);
  std::reverse(c.begin(), c.end());
  std::reverse(r.begin(), r.end());
  EXPECT_NEAR(corpus_bleu4(c, r), base, 1e-15);
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 1.0);
}

TEST(RougeL, IdenticalAndDisjoint) {
  EXPECT_DOUBLE_EQ(rouge_l({"x", "y"}, {"x", "y"}), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l({"x", "y"}, {"p", "q"}), 0.0);
}

TEST(Auroc, HandComputedCases) {
  const std::vector<double> s{0.9, 0.8, 0.3};
  EXPECT_DOUBLE_EQ(auroc(s, {true, false, true}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(s, {true, false, false}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(s, {false, false, true}), 0.0);
  const std::vector<double> tied{0.5, 0.5};
  EXPECT_DOUBLE_EQ(auroc(tied, {true, false}), 0.5);
}

TEST(Auroc, SingleClassIsUndefined) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(auroc(s, {true, true}), UndefinedMetricError);
  EXPECT_THROW(auroc(s, {false, false}), UndefinedMetricError);
}

TEST(Auroc, InvariantToMonotoneTransformAndOrder) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s;
  std::vector<bool> y;
  for (int i = 0; i < 40; ++i) {
    s.push_back(std::round(u(rng) * 10.0) / 10.0);  // forces ties
    y.push_back(u(rng) < 0.4);
  }
  const double base = auroc(s, y);
  std::vector<double> t;
  for (double x : s) t.push_back(std::exp(3.0 * x) - 7.0);
  EXPECT_NEAR(auroc(t, y), base, 1e-12);
  std::vector<double> rs(s.rbegin(), s.rend());
  std::vector<bool> ry(y.rbegin(), y.rend());
  EXPECT_NEAR(auroc(rs, ry), base, 1e-12);
}

TEST(AveragePrecision, HandComputedCases) {
  const std::vector<double> conf{0.9, 0.8, 0.7};
  EXPECT_NEAR(average_precision(conf, {true, false, true}, 2), 0.5 + 0.5 * 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(average_precision(conf, {true, false, true}, 3), 1.0 / 3.0 + 2.0 / 9.0, 1e-12);
  EXPECT_DOUBLE_EQ(average_precision(conf, {true, true, true}, 3), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(conf, {false, false, false}, 3), 0.0);
}

TEST(AveragePrecision, TiesDoNotDependOnOrder) {
  const std::vector<double> conf{0.5, 0.5};
  EXPECT_DOUBLE_EQ(average_precision(conf, {true, false}, 1), 0.5);
  EXPECT_DOUBLE_EQ(average_precision(conf, {false, true}, 1), 0.5);
}

}  // namespace
}  // namespace gkmvlp
