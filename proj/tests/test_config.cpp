#include <gtest/gtest.h>

#include <cmath>

#include "gkmvlp/config.hpp"
#include "gkmvlp/errors.hpp"
#include "gkmvlp/optim.hpp"

namespace gkmvlp {
namespace {

TEST(RunConfig, DefaultsValidate) { EXPECT_NO_THROW(validate(RunConfig{})); }

TEST(RunConfig, ParsesDottedKeysAndComments) {
  const RunConfig cfg = parse_run_config(
      "# desk run\n"
      "optimizer.lr = 1e-3\n"
      "train.batch_size = 4   # small\n"
      "ablation.grounding = concat\n"
      "ablation.ecls = off\n"
      "encoder.hidden_dim = 64\n"
      "seed = 9\n");
  EXPECT_DOUBLE_EQ(cfg.optimizer.lr, 1e-3);
  EXPECT_EQ(cfg.batch_size, 4);
  EXPECT_EQ(cfg.ablation.grounding, Grounding::kConcat);
  EXPECT_FALSE(cfg.ablation.ecls);
  EXPECT_EQ(cfg.encoder.hidden_dim, 64);
  EXPECT_EQ(cfg.seed, 9u);
}

TEST(RunConfig, SerializeRoundTrip) {
  RunConfig cfg;
  cfg.optimizer.lr = 1.2345678901234e-4;
  cfg.ablation = {Grounding::kNone, false};
  cfg.manifest = "data/manifest.jsonl";
  cfg.finetune.fraction = 0.1;
  cfg.seed = 123456789012345ULL;
  EXPECT_EQ(parse_run_config(serialize_run_config(cfg)), cfg);
}

TEST(RunConfig, RejectsInvalidValues) {
  EXPECT_THROW(parse_run_config("optimizer.lr = 0"), ConfigError);
  EXPECT_THROW(parse_run_config("train.batch_size = 1"), ConfigError);
  EXPECT_THROW(parse_run_config("ablation.grounding = attention"), ConfigError);
  EXPECT_THROW(parse_run_config("ablation.ecls = maybe"), ConfigError);
  EXPECT_THROW(parse_run_config("nonsense.key = 1"), ConfigError);
  EXPECT_THROW(parse_run_config("optimizer.lr"), ConfigError);
  EXPECT_THROW(parse_run_config("fusion.temperature = -0.2"), ConfigError);
  EXPECT_THROW(parse_run_config("encoder.hidden_dim = 30"), ConfigError);  // heads must divide it
}

TEST(RunConfig, ErrorNamesTheField) {
  try {
    parse_run_config("optimizer.lr = -1");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("optimizer.lr"), std::string::npos);
  }
}

TEST(Schedule, LinearWarmupThenEpochDecay) {
  OptimizerConfig o;
  o.lr = 1e-3;
  o.warmup_steps = 10;
  o.decay_rate = 0.9;
  EXPECT_NEAR(scheduled_lr(o, 0, 0), 1e-4, 1e-15);
  EXPECT_NEAR(scheduled_lr(o, 4, 0), 5e-4, 1e-15);
  EXPECT_NEAR(scheduled_lr(o, 9, 0), 1e-3, 1e-15);
  EXPECT_NEAR(scheduled_lr(o, 50, 3), 1e-3 * std::pow(0.9, 3), 1e-15);
  o.warmup_steps = 0;
  EXPECT_NEAR(scheduled_lr(o, 0, 0), 1e-3, 1e-15);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  OptimizerConfig o;
  o.weight_decay = 0.0;
  ParameterStore store;
  Parameter& w = store.add("w", Matrix::Constant(2, 2, 1.0));
  w.grad << 3.0, -0.5, 0.0, 2.0;
  AdamW opt(o);
  opt.step({&w}, 0.01);
  EXPECT_NEAR(w.value(0, 0), 0.99, 1e-9);
  EXPECT_NEAR(w.value(0, 1), 1.01, 1e-9);
  EXPECT_NEAR(w.value(1, 0), 1.0, 1e-12);
  EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(AdamW, DecayTouchesMatricesOnly) {
  OptimizerConfig o;
  o.weight_decay = 0.5;
  ParameterStore store;
  Parameter& m = store.add("m", Matrix::Constant(2, 2, 1.0));
  Parameter& b = store.add("b", Matrix::Constant(1, 2, 1.0));
  AdamW opt(o);
  opt.step({&m, &b}, 0.1);
  EXPECT_NEAR(m.value(0, 0), 1.0 - 0.1 * 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(b.value(0, 0), 1.0);
}

}  // namespace
}  // namespace gkmvlp
