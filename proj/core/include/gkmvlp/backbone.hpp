#pragma once

#include <random>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/layers.hpp"
#include "gkmvlp/tokenizer.hpp"

namespace gkmvlp {

struct CrossModalOutput {
  Var z_it;        // len x hidden
  Var itm_logits;  // 1 x 2: (match, no-match)
};

inline constexpr int kItmMatch = 0;
inline constexpr int kItmMismatch = 1;

// Image-report encoder and report decoder. Both modes run the same blocks;
// [ENC]-led sequences attend bidirectionally, [BOS]-led ones causally. Only
// the ITM head and the LM head are mode specific.
class CrossModalStack {
 public:
  static CrossModalStack create(ParameterStore& store, const EncoderConfig& cfg, int vocab_size,
                                std::mt19937_64& rng);

  CrossModalOutput image_report_encode(Graph& g, const TokenSequence& seq, Var memory, bool frozen = false) const;
  // Next-token logits at every prefix position: len x vocab.
  Var decode_logits(Graph& g, const TokenSequence& prefix, Var memory, bool frozen = false) const;
  // Logits for the token following the whole prefix: 1 x vocab.
  Var decode_step(Graph& g, const TokenSequence& prefix, Var memory, bool frozen = false) const;
  // Argmax decoding from [BOS]; stops at [EOS] or after max_len tokens. The
  // returned ids exclude [BOS] and [EOS]. Ties go to the lowest id.
  [[nodiscard]] std::vector<int> greedy_decode(const Matrix& memory, int max_len) const;

  Var hidden(Graph& g, const TokenSequence& seq, Var memory, bool causal, bool frozen = false) const;

  [[nodiscard]] int max_len() const { return cfg_.max_text_len; }

 private:
  EncoderConfig cfg_;
  Parameter* tok_embed_ = nullptr;
  Parameter* pos_ = nullptr;
  std::vector<CrossModalBlock> blocks_;
  LayerNorm ln_final_;
  Linear itm_head_;
  Linear lm_head_;
};

}  // namespace gkmvlp
