#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/model.hpp"

namespace gkmvlp {

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double itc = 0.0;
  double itm = 0.0;
  double lm = 0.0;
  double ecls = 0.0;
  double total = 0.0;
  double itm_accuracy = 0.0;
  int ecls_samples = 0;  // samples with at least one present entity
};

struct BatchOutcome {
  Var total;
  StepLog log;
};

// One pre-training forward pass over `batch`. negatives[i] is the report
// index paired with image i for the mismatched ITM pair. `entities` may be
// null when entity classification is off.
BatchOutcome pretrain_forward(Graph& g, Model& model, std::span<const PreparedSample* const> batch,
                              std::span<const int> negatives, const RunConfig& cfg,
                              const EntityEmbeddings* entities);

struct TrainState {
  std::mt19937_64 rng;
  std::int64_t step = 0;
};

TrainState initial_train_state(std::uint64_t seed);

struct PretrainResult {
  std::vector<StepLog> curve;
};

// Runs cfg.epochs epochs (or cfg.max_steps steps when set) over `samples`.
// Batches are reshuffled each epoch and the last partial batch is dropped.
// Throws NonFiniteError naming the first non-finite tensor if the loss
// diverges.
PretrainResult pretrain(Model& model, const std::vector<PreparedSample>& samples, const RunConfig& cfg,
                        TrainState& state, const std::function<void(const StepLog&)>& on_step = {});

}  // namespace gkmvlp
