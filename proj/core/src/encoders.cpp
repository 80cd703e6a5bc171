#include "gkmvlp/encoders.hpp"

#include "gkmvlp/errors.hpp"

namespace gkmvlp {

Var scaled_dot_attention(Var q, Var k, Var v, const ops::AttentionMask& mask, Matrix* weights_out) {
  return ops::attention(q, k, v, 1, mask, weights_out);
}

Matrix patchify(const Image& image, int patch_size) {
  if (patch_size <= 0 || image.rows() % patch_size != 0 || image.cols() % patch_size != 0) {
    throw ConfigError("image " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                      " is not divisible by patch size " + std::to_string(patch_size));
  }
  const Eigen::Index per_row = image.cols() / patch_size;
  const Eigen::Index count = (image.rows() / patch_size) * per_row;
  Matrix out(count, patch_size * patch_size);
  for (Eigen::Index p = 0; p < count; ++p) {
    const Eigen::Index y0 = (p / per_row) * patch_size;
    const Eigen::Index x0 = (p % per_row) * patch_size;
    for (int dy = 0; dy < patch_size; ++dy) {
      out.row(p).segment(dy * patch_size, patch_size) = image.row(y0 + dy).segment(x0, patch_size);
    }
  }
  return out;
}

ImageEncoder ImageEncoder::create(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng) {
  ImageEncoder e;
  e.cfg_ = cfg;
  const int h = cfg.hidden_dim;
  e.patch_embed_ = Linear::create(store, "image.patch_embed", cfg.patch_size * cfg.patch_size, h, rng);
  e.cls_ = &store.add_normal("image.cls", 1, h, 0.02, rng);
  e.pos_ = &store.add_normal("image.pos", 1 + cfg.num_patches(), h, 0.02, rng);
  for (int l = 0; l < cfg.num_layers; ++l) {
    e.blocks_.push_back(
        EncoderBlock::create(store, "image.block" + std::to_string(l), h, cfg.num_heads, cfg.ffn_dim, rng));
  }
  e.ln_final_ = LayerNorm::create(store, "image.ln_final", h);
  e.proj_ = Linear::create(store, "image.proj", h, cfg.projection_dim, rng);
  return e;
}

ImageEncoding ImageEncoder::operator()(Graph& g, const Image& image, bool frozen) const {
  if (image.rows() != cfg_.image_size || image.cols() != cfg_.image_size) {
    throw ConfigError("image is " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                      ", encoder expects " + std::to_string(cfg_.image_size));
  }
  return encode_patches(g, patchify(image, cfg_.patch_size), frozen);
}

ImageEncoding ImageEncoder::encode_patches(Graph& g, const Matrix& patches, bool frozen) const {
  if (patches.rows() != cfg_.num_patches() || patches.cols() != cfg_.patch_size * cfg_.patch_size) {
    throw ConfigError("patch matrix shape does not match the encoder config");
  }
  Var x = patch_embed_(g, g.constant(patches, "patches"), frozen);
  x = ops::concat_rows({g.param(*cls_, frozen), x});
  x = ops::add(x, g.param(*pos_, frozen));
  for (const EncoderBlock& b : blocks_) x = b(g, x, {}, frozen);
  Var v = ln_final_(g, x, frozen);
  Var z = ops::l2_normalize_rows(proj_(g, ops::rows(v, 0, 1), frozen));
  return {v, z};
}

TokenSequence truncate_to(const TokenSequence& seq, int max_len) {
  if (static_cast<int>(seq.size()) <= max_len) return seq;
  TokenSequence out = seq;
  out.ids.resize(static_cast<std::size_t>(max_len));
  out.mask.resize(static_cast<std::size_t>(max_len));
  out.truncated = true;
  return out;
}

TextEncoder TextEncoder::create(ParameterStore& store, const EncoderConfig& cfg, int vocab_size,
                                std::mt19937_64& rng) {
  TextEncoder e;
  e.cfg_ = cfg;
  const int h = cfg.hidden_dim;
  e.tok_embed_ = &store.add_normal("text.tok_embed", vocab_size, h, 0.02, rng);
  e.pos_ = &store.add_normal("text.pos", cfg.max_text_len, h, 0.02, rng);
  for (int l = 0; l < cfg.num_layers; ++l) {
    e.blocks_.push_back(
        EncoderBlock::create(store, "text.block" + std::to_string(l), h, cfg.num_heads, cfg.ffn_dim, rng));
  }
  e.ln_final_ = LayerNorm::create(store, "text.ln_final", h);
  e.proj_ = Linear::create(store, "text.proj", h, cfg.projection_dim, rng);
  return e;
}

Var TextEncoder::states(Graph& g, const TokenSequence& seq, bool frozen) const {
  const TokenSequence s = truncate_to(seq, cfg_.max_text_len);
  if (s.ids.empty()) throw ValidationError("cannot encode an empty token sequence");
  const auto len = static_cast<Eigen::Index>(s.ids.size());
  Var x = ops::gather_rows(g.param(*tok_embed_, frozen), s.ids);
  x = ops::add(x, ops::rows(g.param(*pos_, frozen), 0, len));
  const ops::AttentionMask mask{s.mask, false};
  for (const EncoderBlock& b : blocks_) x = b(g, x, mask, frozen);
  return ln_final_(g, x, frozen);
}

Var TextEncoder::project(Graph& g, Var cls_state, bool frozen) const {
  return ops::l2_normalize_rows(proj_(g, cls_state, frozen));
}

TextEncoding TextEncoder::operator()(Graph& g, const TokenSequence& seq, bool frozen) const {
  Var t = states(g, seq, frozen);
  return {t, project(g, ops::rows(t, 0, 1), frozen), static_cast<int>(seq.size()) > cfg_.max_text_len};
}

}  // namespace gkmvlp
