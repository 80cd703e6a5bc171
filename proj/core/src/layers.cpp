#include "gkmvlp/layers.hpp"

namespace gkmvlp {

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  Linear l;
  l.weight = &store.add_affine_weight(name + ".weight", in, out, rng);
  l.bias = &store.add_zeros(name + ".bias", 1, out);
  return l;
}

Var Linear::operator()(Graph& g, Var x, bool frozen) const {
  return ops::linear(x, g.param(*weight, frozen), g.param(*bias, frozen));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gain = &store.add_constant(name + ".gain", 1, dim, 1.0);
  ln.bias = &store.add_zeros(name + ".bias", 1, dim);
  return ln;
}

Var LayerNorm::operator()(Graph& g, Var x, bool frozen) const {
  return ops::layer_norm(x, g.param(*gain, frozen), g.param(*bias, frozen));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, int dim,
                                              int num_heads, std::mt19937_64& rng) {
  MultiHeadAttention m;
  m.query = Linear::create(store, name + ".query", dim, dim, rng);
  m.key = Linear::create(store, name + ".key", dim, dim, rng);
  m.value = Linear::create(store, name + ".value", dim, dim, rng);
  m.output = Linear::create(store, name + ".output", dim, dim, rng);
  m.num_heads = num_heads;
  return m;
}

Var MultiHeadAttention::operator()(Graph& g, Var x, Var memory, const ops::AttentionMask& mask, bool frozen,
                                   Matrix* weights_out) const {
  Var q = query(g, x, frozen);
  Var k = key(g, memory, frozen);
  Var v = value(g, memory, frozen);
  return output(g, ops::attention(q, k, v, num_heads, mask, weights_out), frozen);
}

FeedForward FeedForward::create(ParameterStore& store, const std::string& name, int dim, int hidden,
                                std::mt19937_64& rng) {
  FeedForward f;
  f.fc1 = Linear::create(store, name + ".fc1", dim, hidden, rng);
  f.fc2 = Linear::create(store, name + ".fc2", hidden, dim, rng);
  return f;
}

Var FeedForward::operator()(Graph& g, Var x, bool frozen) const {
  return fc2(g, ops::gelu(fc1(g, x, frozen)), frozen);
}

EncoderBlock EncoderBlock::create(ParameterStore& store, const std::string& name, int dim, int num_heads,
                                  int ffn_dim, std::mt19937_64& rng) {
  EncoderBlock b;
  b.ln_attn = LayerNorm::create(store, name + ".ln_attn", dim);
  b.attn = MultiHeadAttention::create(store, name + ".attn", dim, num_heads, rng);
  b.ln_ffn = LayerNorm::create(store, name + ".ln_ffn", dim);
  b.ffn = FeedForward::create(store, name + ".ffn", dim, ffn_dim, rng);
  return b;
}

Var EncoderBlock::operator()(Graph& g, Var x, const ops::AttentionMask& mask, bool frozen) const {
  Var h = ln_attn(g, x, frozen);
  x = ops::add(x, attn(g, h, h, mask, frozen));
  return ops::add(x, ffn(g, ln_ffn(g, x, frozen), frozen));
}

CrossModalBlock CrossModalBlock::create(ParameterStore& store, const std::string& name, int dim, int num_heads,
                                        int ffn_dim, std::mt19937_64& rng) {
  CrossModalBlock b;
  b.ln_self = LayerNorm::create(store, name + ".ln_self", dim);
  b.self_attn = MultiHeadAttention::create(store, name + ".self_attn", dim, num_heads, rng);
  b.ln_cross = LayerNorm::create(store, name + ".ln_cross", dim);
  b.cross_attn = MultiHeadAttention::create(store, name + ".cross_attn", dim, num_heads, rng);
  b.ln_ffn = LayerNorm::create(store, name + ".ln_ffn", dim);
  b.ffn = FeedForward::create(store, name + ".ffn", dim, ffn_dim, rng);
  return b;
}

Var CrossModalBlock::operator()(Graph& g, Var x, const ops::AttentionMask& self_mask, Var memory,
                                bool frozen) const {
  Var h = ln_self(g, x, frozen);
  x = ops::add(x, self_attn(g, h, h, self_mask, frozen));
  x = ops::add(x, cross_attn(g, ln_cross(g, x, frozen), memory, {}, frozen));
  return ops::add(x, ffn(g, ln_ffn(g, x, frozen), frozen));
}

FusionBlock FusionBlock::create(ParameterStore& store, const std::string& name, int dim, int num_heads,
                                int ffn_dim, bool normalize_memory, std::mt19937_64& rng) {
  FusionBlock b;
  b.ln_query = LayerNorm::create(store, name + ".ln_query", dim);
  if (normalize_memory) b.ln_memory = LayerNorm::create(store, name + ".ln_memory", dim);
  b.cross_attn = MultiHeadAttention::create(store, name + ".cross_attn", dim, num_heads, rng);
  b.ln_ffn = LayerNorm::create(store, name + ".ln_ffn", dim);
  b.ffn = FeedForward::create(store, name + ".ffn", dim, ffn_dim, rng);
  return b;
}

Var FusionBlock::operator()(Graph& g, Var x, Var memory, const ops::AttentionMask& memory_mask, bool frozen,
                            Matrix* weights_out) const {
  Var mem = ln_memory ? (*ln_memory)(g, memory, frozen) : memory;
  x = ops::add(x, cross_attn(g, ln_query(g, x, frozen), mem, memory_mask, frozen, weights_out));
  return ops::add(x, ffn(g, ln_ffn(g, x, frozen), frozen));
}

}  // namespace gkmvlp
