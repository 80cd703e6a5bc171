#pragma once

#include <random>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/layers.hpp"
#include "gkmvlp/raster.hpp"
#include "gkmvlp/tokenizer.hpp"

namespace gkmvlp {

// Single-head softmax(QK^T / sqrt(d_k)) V.
Var scaled_dot_attention(Var q, Var k, Var v, const ops::AttentionMask& mask = {},
                         Matrix* weights_out = nullptr);

// Non-overlapping patches in row-major patch order, one flattened patch per
// row. Throws ConfigError unless both sides are multiples of `patch_size`.
Matrix patchify(const Image& image, int patch_size);

struct ImageEncoding {
  Var v;  // (1 + num_patches) x hidden, row 0 is the class token
  Var z;  // 1 x projection, unit norm
};

struct TextEncoding {
  Var t;  // len x hidden
  Var z;  // 1 x projection, unit norm
  bool truncated = false;
};

class ImageEncoder {
 public:
  static ImageEncoder create(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

  ImageEncoding operator()(Graph& g, const Image& image, bool frozen = false) const;
  ImageEncoding encode_patches(Graph& g, const Matrix& patches, bool frozen = false) const;

 private:
  EncoderConfig cfg_;
  Linear patch_embed_;
  Parameter* cls_ = nullptr;
  Parameter* pos_ = nullptr;
  std::vector<EncoderBlock> blocks_;
  LayerNorm ln_final_;
  Linear proj_;
};

// Bidirectional report encoder E_T with projection head f_T.
class TextEncoder {
 public:
  static TextEncoder create(ParameterStore& store, const EncoderConfig& cfg, int vocab_size,
                            std::mt19937_64& rng);

  // Sequences longer than max_text_len are cut and flagged.
  TextEncoding operator()(Graph& g, const TokenSequence& seq, bool frozen = false) const;
  // Hidden states only, skipping the projection head.
  Var states(Graph& g, const TokenSequence& seq, bool frozen = false) const;
  Var project(Graph& g, Var cls_state, bool frozen = false) const;

  [[nodiscard]] int max_len() const { return cfg_.max_text_len; }

 private:
  EncoderConfig cfg_;
  Parameter* tok_embed_ = nullptr;
  Parameter* pos_ = nullptr;
  std::vector<EncoderBlock> blocks_;
  LayerNorm ln_final_;
  Linear proj_;
};

TokenSequence truncate_to(const TokenSequence& seq, int max_len);

}  // namespace gkmvlp
