#pragma once

#include <optional>
#include <random>
#include <string>

#include "gkmvlp/ops.hpp"
#include "gkmvlp/tensor.hpp"

namespace gkmvlp {

// Every layer holds pointers into a ParameterStore. `frozen` evaluates the
// layer as a stop-gradient view of its parameters.

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  static Linear create(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  Var operator()(Graph& g, Var x, bool frozen = false) const;
  [[nodiscard]] int in_dim() const { return static_cast<int>(weight->value.rows()); }
  [[nodiscard]] int out_dim() const { return static_cast<int>(weight->value.cols()); }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, int dim);
  Var operator()(Graph& g, Var x, bool frozen = false) const;
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int num_heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, int dim, int num_heads,
                                   std::mt19937_64& rng);
  Var operator()(Graph& g, Var x, Var memory, const ops::AttentionMask& mask, bool frozen = false,
                 Matrix* weights_out = nullptr) const;
};

struct FeedForward {
  Linear fc1;
  Linear fc2;

  static FeedForward create(ParameterStore& store, const std::string& name, int dim, int hidden,
                            std::mt19937_64& rng);
  Var operator()(Graph& g, Var x, bool frozen = false) const;
};

// Pre-norm self-attention block.
struct EncoderBlock {
  LayerNorm ln_attn;
  MultiHeadAttention attn;
  LayerNorm ln_ffn;
  FeedForward ffn;

  static EncoderBlock create(ParameterStore& store, const std::string& name, int dim, int num_heads,
                             int ffn_dim, std::mt19937_64& rng);
  Var operator()(Graph& g, Var x, const ops::AttentionMask& mask, bool frozen = false) const;
};

// Pre-norm self-attention, cross-attention and feed-forward block. The same
// weights serve bidirectional (encoder) and causal (decoder) use.
struct CrossModalBlock {
  LayerNorm ln_self;
  MultiHeadAttention self_attn;
  LayerNorm ln_cross;
  MultiHeadAttention cross_attn;
  LayerNorm ln_ffn;
  FeedForward ffn;

  static CrossModalBlock create(ParameterStore& store, const std::string& name, int dim, int num_heads,
                                int ffn_dim, std::mt19937_64& rng);
  Var operator()(Graph& g, Var x, const ops::AttentionMask& self_mask, Var memory,
                 bool frozen = false) const;
};

// Pre-norm cross-attention and feed-forward block; queries never attend to
// each other. `ln_memory` is optional.
struct FusionBlock {
  LayerNorm ln_query;
  std::optional<LayerNorm> ln_memory;
  MultiHeadAttention cross_attn;
  LayerNorm ln_ffn;
  FeedForward ffn;

  static FusionBlock create(ParameterStore& store, const std::string& name, int dim, int num_heads,
                            int ffn_dim, bool normalize_memory, std::mt19937_64& rng);
  Var operator()(Graph& g, Var x, Var memory, const ops::AttentionMask& memory_mask, bool frozen = false,
                 Matrix* weights_out = nullptr) const;
};

}  // namespace gkmvlp
