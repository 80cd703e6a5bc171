#include "gkmvlp/backbone.hpp"

#include "gkmvlp/encoders.hpp"
#include "gkmvlp/errors.hpp"

namespace gkmvlp {

CrossModalStack CrossModalStack::create(ParameterStore& store, const EncoderConfig& cfg, int vocab_size,
                                        std::mt19937_64& rng) {
  CrossModalStack s;
  s.cfg_ = cfg;
  const int h = cfg.hidden_dim;
  s.tok_embed_ = &store.add_normal("xmodal.tok_embed", vocab_size, h, 0.02, rng);
  s.pos_ = &store.add_normal("xmodal.pos", cfg.max_text_len + 1, h, 0.02, rng);
  for (int l = 0; l < cfg.num_layers; ++l) {
    s.blocks_.push_back(
        CrossModalBlock::create(store, "xmodal.block" + std::to_string(l), h, cfg.num_heads, cfg.ffn_dim, rng));
  }
  s.ln_final_ = LayerNorm::create(store, "xmodal.ln_final", h);
  s.itm_head_ = Linear::create(store, "xmodal.itm_head", h, 2, rng);
  s.lm_head_ = Linear::create(store, "xmodal.lm_head", h, vocab_size, rng);
  return s;
}

Var CrossModalStack::hidden(Graph& g, const TokenSequence& seq, Var memory, bool causal, bool frozen) const {
  // One extra position so a full-length report can still be followed by [EOS].
  const TokenSequence s = truncate_to(seq, cfg_.max_text_len + 1);
  if (s.ids.empty()) throw ValidationError("cannot encode an empty token sequence");
  Var x = ops::gather_rows(g.param(*tok_embed_, frozen), s.ids);
  x = ops::add(x, ops::rows(g.param(*pos_, frozen), 0, static_cast<Eigen::Index>(s.ids.size())));
  const ops::AttentionMask mask{s.mask, causal};
  for (const CrossModalBlock& b : blocks_) x = b(g, x, mask, memory, frozen);
  return ln_final_(g, x, frozen);
}

CrossModalOutput CrossModalStack::image_report_encode(Graph& g, const TokenSequence& seq, Var memory,
                                                      bool frozen) const {
  if (seq.ids.empty() || seq.ids.front() != kEnc) throw ValidationError("encoder input must start with [ENC]");
  Var z = hidden(g, seq, memory, false, frozen);
  return {z, itm_head_(g, ops::rows(z, 0, 1), frozen)};
}

Var CrossModalStack::decode_logits(Graph& g, const TokenSequence& prefix, Var memory, bool frozen) const {
  if (prefix.ids.empty() || prefix.ids.front() != kBos) throw ValidationError("decoder input must start with [BOS]");
  return lm_head_(g, hidden(g, prefix, memory, true, frozen), frozen);
}

Var CrossModalStack::decode_step(Graph& g, const TokenSequence& prefix, Var memory, bool frozen) const {
  Var logits = decode_logits(g, prefix, memory, frozen);
  return ops::rows(logits, logits.rows() - 1, 1);
}

std::vector<int> CrossModalStack::greedy_decode(const Matrix& memory, int max_len) const {
  if (max_len < 1) throw ValidationError("max_len must be at least 1");
  std::vector<int> out;
  TokenSequence prefix{{kBos}, {true}, false};
  const int limit = std::min(max_len, cfg_.max_text_len);
  while (static_cast<int>(out.size()) < limit) {
    Graph g(false);
    const Matrix logits = decode_step(g, prefix, g.constant(memory, "memory"), true).value();
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(0, j) > logits(0, best)) best = j;
    }
    if (best == kEos) break;
    out.push_back(static_cast<int>(best));
    prefix.ids.push_back(static_cast<int>(best));
    prefix.mask.push_back(true);
  }
  return out;
}

}  // namespace gkmvlp
