#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace gkmvlp {

struct EncoderConfig {
  int image_size = 64;
  int patch_size = 8;
  int hidden_dim = 128;      // shared by image and report encoders
  int projection_dim = 64;   // contrastive space
  int region_dim = 128;
  int prompt_dim = 128;
  int num_layers = 2;        // per encoder and for the cross-modal stack
  int num_heads = 4;
  int ffn_dim = 256;
  int max_text_len = 64;

  [[nodiscard]] int patches_per_side() const { return image_size / patch_size; }
  [[nodiscard]] int num_patches() const { return patches_per_side() * patches_per_side(); }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct FusionConfig {
  int num_layers = 2;
  int num_heads = 4;
  double temperature = 0.2;  // entity classification temperature
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

struct LossWeights {
  double itm = 1.0;   // lambda_1
  double lm = 1.0;    // lambda_2
  double ecls = 1.0;  // lambda_3
  double itc_temperature = 0.07;  // initial value of the learnable temperature
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct OptimizerConfig {
  double lr = 3e-4;
  double weight_decay = 0.05;
  int warmup_steps = 3000;
  double decay_rate = 0.9;  // per epoch after warmup
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

enum class Grounding { kNone, kConcat, kCrossAttention };

std::string_view to_string(Grounding g);

struct AblationConfig {
  Grounding grounding = Grounding::kCrossAttention;
  bool ecls = true;
  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

struct FinetuneConfig {
  int epochs = 30;
  double lr = 1e-3;
  int batch_size = 16;
  double fraction = 1.0;
  int max_decode_len = 48;
  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path out_dir = "out";
  EncoderConfig encoder;
  FusionConfig fusion;
  LossWeights loss;
  OptimizerConfig optimizer;
  AblationConfig ablation;
  FinetuneConfig finetune;
  int batch_size = 8;
  int epochs = 20;
  int max_steps = 0;  // 0: run every epoch to the end
  std::uint64_t seed = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Throws ConfigError naming the first offending field.
void validate(const EncoderConfig& cfg);
void validate(const FusionConfig& cfg);
void validate(const RunConfig& cfg);

// Applies one dotted key (e.g. "optimizer.lr") to `cfg`.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

// Flat "key = value" text with '#' comments. The result is validated.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace gkmvlp
