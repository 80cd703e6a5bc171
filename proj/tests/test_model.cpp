#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gkmvlp/backbone.hpp"
#include "gkmvlp/encoders.hpp"
#include "gkmvlp/errors.hpp"
#include "gkmvlp/gk_fusion.hpp"
#include "gkmvlp/model.hpp"
#include "gkmvlp/objectives.hpp"
#include "gkmvlp/ops.hpp"
#include "gkmvlp/pretrain.hpp"
#include "support/support.hpp"

namespace gkmvlp {
namespace {

using testing::gradcheck;
using testing::random_matrix;

struct ModelFixture : ::testing::Test {
  std::vector<SampleRecord> records = generate_dataset(testing::tiny_synth(6, 21, 2, 3));
  std::unique_ptr<Model> model = testing::tiny_model(records);
  std::vector<PreparedSample> samples = prepare_samples(records, *model);
  std::mt19937_64 rng{5};

  const PreparedSample& with_entities() const {
    for (const PreparedSample& s : samples) {
      if (s.prompt_spans.size() >= 2) return s;
    }
    throw std::runtime_error("no sample with two present entities");
  }
};

TEST(Patchify, RowMajorPatches) {
  Image img(4, 4);
  for (int i = 0; i < 16; ++i) img.data()[i] = i;
  const Matrix p = patchify(img, 2);
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(p.cols(), 4);
  EXPECT_EQ(p.row(0), (RowVector(4) << 0, 1, 4, 5).finished());
  EXPECT_EQ(p.row(1), (RowVector(4) << 2, 3, 6, 7).finished());
  EXPECT_EQ(p.row(3), (RowVector(4) << 10, 11, 14, 15).finished());
  EXPECT_THROW(patchify(Image::Zero(5, 4), 2), ConfigError);
}

TEST_F(ModelFixture, EncoderShapesAndUnitNorm) {
  Graph g(false);
  const EncoderConfig& c = model->encoder_config();
  const ImageEncoding img = model->image()(g, records[0].image);
  EXPECT_EQ(img.v.rows(), 1 + c.num_patches());
  EXPECT_EQ(img.v.cols(), c.hidden_dim);
  EXPECT_EQ(img.z.cols(), c.projection_dim);
  EXPECT_NEAR(img.z.value().norm(), 1.0, 1e-12);
  const TextEncoding txt = model->text()(g, samples[0].report);
  EXPECT_EQ(txt.t.rows(), static_cast<Eigen::Index>(samples[0].report.size()));
  EXPECT_NEAR(txt.z.value().norm(), 1.0, 1e-12);
  EXPECT_THROW(model->image()(g, Image::Zero(16, 16)), ConfigError);
}

TEST_F(ModelFixture, LongReportsAreTruncatedAndFlagged) {
  TokenSequence seq;
  seq.ids.assign(40, kUnk);
  seq.ids[0] = kCls;
  seq.mask.assign(40, true);
  Graph g(false);
  const TextEncoding t = model->text()(g, seq);
  EXPECT_TRUE(t.truncated);
  EXPECT_EQ(t.t.rows(), model->encoder_config().max_text_len);
}

TEST_F(ModelFixture, RegionPoolingAveragesPatchCenters) {
  const RegionPooling& pool = samples[0].pooling;
  ASSERT_EQ(pool.weights.rows(), kNumRegions);
  for (int k = 0; k < kNumRegions; ++k) {
    EXPECT_EQ(pool.weights(k, 0), 0.0);
    if (pool.valid[static_cast<std::size_t>(k)]) {
      EXPECT_NEAR(pool.weights.row(k).sum(), 1.0, 1e-12);
    } else {
      EXPECT_EQ(pool.weights.row(k).sum(), 0.0);
    }
  }
  std::array<Box, kNumRegions> empty{};
  EXPECT_THROW(region_pooling(empty, model->encoder_config()), ValidationError);
}

TEST_F(ModelFixture, InvalidRegionsStayZero) {
  RegionPooling pool = samples[0].pooling;
  pool.valid[4] = false;
  pool.weights.row(4).setZero();
  Graph g(false);
  Var v = model->image().encode_patches(g, samples[0].patches).v;
  const GroundingModule& gk = model->gk();
  const Matrix z = gk.project_regions(g, gk.extract_region_features(g, v, pool)).value();
  EXPECT_EQ(z.row(4).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(z.row(3).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(ModelFixture, FuseLocalIsInvariantToPromptTokenPermutation) {
  const PreparedSample& s = with_entities();
  const int hidden = model->encoder_config().hidden_dim;
  const Matrix z_r = random_matrix(kNumRegions, hidden, rng);
  Graph g(false);
  Var p = model->gk().encode_prompt(g, model->text(), s.prompt);
  const Matrix pv = p.value();
  std::vector<bool> mask = s.prompt.mask;
  mask[1] = false;  // one masked key must stay masked after the shuffle
  std::vector<int> perm(static_cast<std::size_t>(pv.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix shuffled(pv.rows(), pv.cols());
  std::vector<bool> shuffled_mask(mask.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = pv.row(perm[i]);
    shuffled_mask[i] = mask[static_cast<std::size_t>(perm[i])];
  }
  const Matrix a = model->gk().fuse_local(g, g.constant(z_r), g.constant(pv), mask).value();
  const Matrix b = model->gk().fuse_local(g, g.constant(z_r), g.constant(shuffled), shuffled_mask).value();
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(ModelFixture, FuseGlobalIsInvariantToRegionPermutation) {
  const int hidden = model->encoder_config().hidden_dim;
  const Matrix v = random_matrix(1 + model->encoder_config().num_patches(), hidden, rng);
  const Matrix z = random_matrix(kNumRegions, hidden, rng);
  std::vector<int> perm(kNumRegions);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix zp(z.rows(), z.cols());
  for (int i = 0; i < kNumRegions; ++i) zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
  Graph g(false);
  const Matrix a = model->gk().fuse_global(g, g.constant(v), g.constant(z)).value();
  const Matrix b = model->gk().fuse_global(g, g.constant(v), g.constant(zp)).value();
  EXPECT_EQ(a.rows(), v.rows());
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(ModelFixture, FusionTraceRowsAreStochasticOverUnmaskedTokens) {
  const PreparedSample& s = with_entities();
  Graph g(false);
  Var v = model->image().encode_patches(g, s.patches).v;
  const GroundingModule& gk = model->gk();
  Var z_r = gk.project_regions(g, gk.extract_region_features(g, v, s.pooling));
  Var p = gk.encode_prompt(g, model->text(), s.prompt);
  FusionTrace trace;
  gk.fuse_local(g, z_r, p, s.prompt.mask, false, &trace);
  ASSERT_EQ(trace.local_attention.size(), static_cast<std::size_t>(model->fusion_config().num_layers));
  for (const Matrix& w : trace.local_attention) {
    ASSERT_EQ(w.rows(), kNumRegions);
    for (Eigen::Index i = 0; i < w.rows(); ++i) EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-6);
  }
}

TEST_F(ModelFixture, PromptBranchSendsNoGradientIntoReportEncoder) {
  const PreparedSample& s = with_entities();
  model->params().zero_grad();
  Graph g(true);
  Var v = model->image().encode_patches(g, s.patches).v;
  Var memory = fused_memory(g, *model, Grounding::kCrossAttention, v, s.pooling, s.prompt, false);
  g.backward(ops::sum(ops::hadamard(memory, memory)));
  for (const Parameter* p : model->params().with_prefix("text.")) {
    EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
  }
  double gk_grad = 0.0;
  for (const Parameter* p : model->params().with_prefix("gk.")) gk_grad += p->grad.cwiseAbs().sum();
  EXPECT_GT(gk_grad, 0.0);
}

TEST_F(ModelFixture, FrozenGroundingModuleGetsNoGradient) {
  const PreparedSample& s = with_entities();
  model->params().zero_grad();
  Graph g(true);
  Var v = model->image().encode_patches(g, s.patches).v;
  Var memory = fused_memory(g, *model, Grounding::kCrossAttention, v, s.pooling, s.prompt, true);
  g.backward(ops::sum(ops::hadamard(memory, memory)));
  for (const Parameter* p : model->params().with_prefix("gk.")) {
    EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
  }
  double image_grad = 0.0;
  for (const Parameter* p : model->params().with_prefix("image.")) image_grad += p->grad.cwiseAbs().sum();
  EXPECT_GT(image_grad, 0.0);
}

TEST_F(ModelFixture, DecoderIsCausal) {
  const PreparedSample& s = samples[0];
  Graph g(false);
  Var memory = model->image().encode_patches(g, s.patches).v;
  TokenSequence changed = s.decoder_input;
  ASSERT_GE(changed.size(), 5u);
  const std::size_t cut = 3;
  for (std::size_t i = cut + 1; i < changed.size(); ++i) changed.ids[i] = (changed.ids[i] + 7) % model->vocab().size();
  const Matrix a = model->xmodal().decode_logits(g, s.decoder_input, memory).value();
  const Matrix b = model->xmodal().decode_logits(g, changed, memory).value();
  EXPECT_LE((a.topRows(cut + 1) - b.topRows(cut + 1)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT((a.bottomRows(1) - b.bottomRows(1)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST_F(ModelFixture, EncoderModeIsBidirectional) {
  const PreparedSample& s = samples[0];
  Graph g(false);
  Var memory = model->image().encode_patches(g, s.patches).v;
  TokenSequence changed = s.itm_input;
  changed.ids.back() = (changed.ids.back() + 1) % model->vocab().size();
  const Matrix a = model->xmodal().image_report_encode(g, s.itm_input, memory).z_it.value();
  const Matrix b = model->xmodal().image_report_encode(g, changed, memory).z_it.value();
  EXPECT_GT((a.row(0) - b.row(0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST_F(ModelFixture, ModeTokensAreChecked) {
  Graph g(false);
  Var memory = model->image().encode_patches(g, samples[0].patches).v;
  EXPECT_THROW(model->xmodal().image_report_encode(g, samples[0].decoder_input, memory), ValidationError);
  EXPECT_THROW(model->xmodal().decode_logits(g, samples[0].itm_input, memory), ValidationError);
}

TEST_F(ModelFixture, GreedyDecodeMatchesStepwiseArgmax) {
  Graph g(false);
  const Matrix memory = model->image().encode_patches(g, samples[0].patches).v.value();
  const std::vector<int> out = model->xmodal().greedy_decode(memory, 6);
  EXPECT_LE(out.size(), 6u);
  TokenSequence prefix;
  prefix.ids = {kBos};
  prefix.mask = {true};
  for (int id : out) {
    Graph h(false);
    const Matrix logits = model->xmodal().decode_step(h, prefix, h.constant(memory)).value();
    Eigen::Index best = 0;
    logits.row(0).maxCoeff(&best);
    EXPECT_EQ(best, id);
    prefix.ids.push_back(id);
    prefix.mask.push_back(true);
  }
  EXPECT_EQ(model->xmodal().greedy_decode(memory, 6), out);
}

TEST_F(ModelFixture, DecoderTargetsShiftInputByOne) {
  for (const PreparedSample& s : samples) {
    ASSERT_EQ(s.decoder_targets.size(), s.decoder_input.size());
    for (std::size_t i = 1; i < s.decoder_input.size(); ++i) EXPECT_EQ(s.decoder_targets[i - 1], s.decoder_input.ids[i]);
    if (!s.decoder_input.truncated) {
      EXPECT_EQ(s.decoder_targets.back(), kEos);
    }
  }
}

TEST_F(ModelFixture, EqualSeedsGiveEqualWeights) {
  auto other = testing::tiny_model(records);
  EXPECT_EQ(parameter_hash(model->params()), parameter_hash(other->params()));
  auto different = testing::tiny_model(records, 8);
  EXPECT_NE(parameter_hash(model->params()), parameter_hash(different->params()));
  auto copy = model->clone();
  EXPECT_EQ(parameter_hash(model->params()), parameter_hash(copy->params()));
}

TEST_F(ModelFixture, EntityEmbeddingsAreUnitRows) {
  const EntityEmbeddings e = encode_entities(model->text(), model->vocab());
  ASSERT_EQ(e.pos.rows(), kNumEntities);
  for (Eigen::Index i = 0; i < kNumEntities; ++i) {
    EXPECT_NEAR(e.pos.row(i).norm(), 1.0, 1e-12);
    EXPECT_NEAR(e.neg.row(i).norm(), 1.0, 1e-12);
  }
}

// Finite differences through the whole pre-training objective reach every
// trainable tensor of every module.
class FullObjectiveGradient : public ModelFixture, public ::testing::WithParamInterface<Grounding> {};

TEST_P(FullObjectiveGradient, MatchesFiniteDifferences) {
  RunConfig cfg = testing::tiny_run_config();
  cfg.ablation.grounding = GetParam();
  cfg.ablation.ecls = true;
  std::vector<const PreparedSample*> batch;
  for (std::size_t i = 0; i < 3; ++i) batch.push_back(&samples[i]);
  const std::vector<int> negatives{1, 2, 0};
  const EntityEmbeddings entities = encode_entities(model->text(), model->vocab());
  // Finite differences on text.* also move the stop-gradient prompt, so the
  // report encoder is checked only where no prompt is encoded.
  std::vector<Parameter*> params;
  for (Parameter* p : model->params().all()) {
    if (GetParam() == Grounding::kNone || p->name.rfind("text.", 0) != 0) params.push_back(p);
  }
  const auto r = gradcheck(
      [&](Graph& g) { return pretrain_forward(g, *model, batch, negatives, cfg, &entities).total; }, params, 6, 17);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GE(r.checked, 6 * params.size() / 2);
}

INSTANTIATE_TEST_SUITE_P(Grounding, FullObjectiveGradient,
                         ::testing::Values(Grounding::kNone, Grounding::kConcat, Grounding::kCrossAttention),
                         [](const ::testing::TestParamInfo<Grounding>& info) { return std::string(to_string(info.param)); });

}  // namespace
}  // namespace gkmvlp
