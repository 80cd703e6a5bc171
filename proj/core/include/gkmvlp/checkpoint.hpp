#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/model.hpp"
#include "gkmvlp/pretrain.hpp"

namespace gkmvlp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  RunConfig config;
  std::vector<std::string> vocab_words;  // without the special tokens
  std::vector<std::pair<std::string, Matrix>> tensors;
  std::string rng_state;
  std::int64_t step = 0;
};

Checkpoint make_checkpoint(const Model& model, const RunConfig& cfg, const TrainState& state);

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws CheckpointError on I/O failure, truncation, a bad magic number or a
// version other than kCheckpointVersion. Nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::unique_ptr<Model> restore_model(const Checkpoint& ckpt);
TrainState restore_train_state(const Checkpoint& ckpt);

}  // namespace gkmvlp
