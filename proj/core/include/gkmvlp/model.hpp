#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gkmvlp/backbone.hpp"
#include "gkmvlp/config.hpp"
#include "gkmvlp/encoders.hpp"
#include "gkmvlp/gk_fusion.hpp"
#include "gkmvlp/record.hpp"
#include "gkmvlp/tokenizer.hpp"

namespace gkmvlp {

// Every trainable tensor of the framework. Parameters are created in the
// same order whatever the ablation settings, so equal seeds give equal
// initial weights.
class Model {
 public:
  Model(const EncoderConfig& encoder, const FusionConfig& fusion, Vocabulary vocab, std::uint64_t init_seed,
        double itc_temperature = 0.07);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Same configuration and vocabulary with copied parameter values.
  [[nodiscard]] std::unique_ptr<Model> clone() const;

  [[nodiscard]] const EncoderConfig& encoder_config() const { return encoder_cfg_; }
  [[nodiscard]] const FusionConfig& fusion_config() const { return fusion_cfg_; }
  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] ParameterStore& params() { return params_; }
  [[nodiscard]] const ParameterStore& params() const { return params_; }

  [[nodiscard]] const ImageEncoder& image() const { return image_; }
  [[nodiscard]] const TextEncoder& text() const { return text_; }
  [[nodiscard]] const CrossModalStack& xmodal() const { return xmodal_; }
  [[nodiscard]] const GroundingModule& gk() const { return gk_; }
  [[nodiscard]] Parameter& log_temperature() { return *log_temp_; }
  [[nodiscard]] const Parameter& log_temperature() const { return *log_temp_; }

 private:
  EncoderConfig encoder_cfg_;
  FusionConfig fusion_cfg_;
  Vocabulary vocab_;
  std::uint64_t init_seed_;
  double itc_temperature_;
  ParameterStore params_;
  ImageEncoder image_;
  TextEncoder text_;
  CrossModalStack xmodal_;
  GroundingModule gk_;
  Parameter* log_temp_ = nullptr;
};

// FNV-1a over names, shapes and raw values of the parameters with `prefix`.
std::uint64_t parameter_hash(const ParameterStore& store, std::string_view prefix = "");

// Words of the atlas, entity phrases and question templates; always part of
// the tokenizer corpus so every region and entity name has its own id.
std::vector<std::string> domain_lexicon();
Vocabulary build_vocabulary(const std::vector<SampleRecord>& records);

// Token ranges of one prompt: position of every sentence inside the encoded
// [CLS]-led prompt sequence.
struct SentenceSpan {
  int begin = 0;  // first token
  int end = 0;    // one past the last token
  std::vector<int> regions;
};

struct PreparedQuestion {
  TokenSequence tokens;  // [ENC] question words
  int answer = 0;
  bool closed = false;
};

// Per-sample tensors reused across epochs.
struct PreparedSample {
  std::string sample_id;
  Matrix patches;
  TokenSequence report;        // [CLS] words, for the report encoder
  TokenSequence itm_input;     // [ENC] words
  TokenSequence decoder_input; // [BOS] words
  std::vector<int> decoder_targets;  // words [EOS]
  TokenSequence prompt;        // [CLS] prompt words
  std::vector<SentenceSpan> prompt_spans;
  RegionPooling pooling;
  LabelVector labels{};
  std::array<Box, kNumRegions> boxes{};
  std::vector<PreparedQuestion> questions;
  // Region of the only present entity, or -1 unless exactly one is present.
  int planted_region = -1;
};

PreparedSample prepare_sample(const SampleRecord& record, const Model& model);
std::vector<PreparedSample> prepare_samples(const std::vector<SampleRecord>& records, const Model& model);

// Report sentence used as the neutral prompt when no annotation is supplied.
TokenSequence neutral_prompt(const Model& model);

// Fused image memory the decoder reads: z_fused for grounded variants, v for
// grounding none. `prompt` selects the text the regions attend to.
Var fused_memory(Graph& g, const Model& model, Grounding grounding, Var v, const RegionPooling& pooling,
                 const TokenSequence& prompt, bool frozen_gk, FusionTrace* trace = nullptr);

}  // namespace gkmvlp
