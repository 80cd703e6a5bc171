#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/encoders.hpp"
#include "gkmvlp/layers.hpp"
#include "gkmvlp/record.hpp"

namespace gkmvlp {

// Row k averages the patch rows of v whose centers fall inside box k. Column
// 0 (the class token) is always zero.
struct RegionPooling {
  Matrix weights;           // kNumRegions x (1 + num_patches)
  std::vector<bool> valid;  // false for boxes holding no patch center
};

// Throws ValidationError when no box holds a patch center.
RegionPooling region_pooling(const std::array<Box, kNumRegions>& boxes, const EncoderConfig& cfg);

struct RegionFeatures {
  Var R;  // kNumRegions x region_dim, row k is region k; invalid rows are zero
  std::vector<bool> valid;
};

struct EntityEmbeddings {
  Matrix pos;  // kNumEntities x projection_dim, unit rows
  Matrix neg;
};

// Per-layer head-averaged weights of the region queries over prompt tokens.
struct FusionTrace {
  std::vector<Matrix> local_attention;
};

struct FusionCounters {
  std::atomic<std::int64_t> fuse_local{0};
  std::atomic<std::int64_t> fuse_concat{0};
  std::atomic<std::int64_t> fuse_global{0};
  std::atomic<std::int64_t> encode_prompt{0};
};

class GroundingModule {
 public:
  static GroundingModule create(ParameterStore& store, const EncoderConfig& enc, const FusionConfig& fusion,
                                std::mt19937_64& rng);

  RegionFeatures extract_region_features(Graph& g, Var v, const RegionPooling& pooling,
                                         bool frozen = false) const;
  // f_R applied per region; invalid regions stay zero.
  Var project_regions(Graph& g, const RegionFeatures& features, bool frozen = false) const;
  // Report-encoder states of the prompt behind a stop-gradient barrier.
  Var encode_prompt(Graph& g, const TextEncoder& text, const TokenSequence& prompt, bool frozen = false) const;
  Var fuse_local(Graph& g, Var z_r, Var p, const std::vector<bool>& prompt_mask, bool frozen = false,
                 FusionTrace* trace = nullptr) const;
  // Ablation variant: affine([z_R ; mean(p)]) per region.
  Var fuse_concat(Graph& g, Var z_r, Var p, const std::vector<bool>& prompt_mask, bool frozen = false) const;
  Var fuse_global(Graph& g, Var v, Var z_local, bool frozen = false) const;

  FusionCounters& counters() const { return *counters_; }

 private:
  Linear region_embed_;
  Linear f_r_;
  std::optional<Linear> prompt_adapter_;
  std::vector<FusionBlock> local_;
  Linear concat_;
  std::optional<Linear> global_adapter_;
  FusionBlock global_;
  std::shared_ptr<FusionCounters> counters_ = std::make_shared<FusionCounters>();
};

// Class-token embeddings of "[CLS] <entity>" and "[CLS] no <entity>" through
// the report encoder and f_T, detached from the graph.
EntityEmbeddings encode_entities(const TextEncoder& text, const Vocabulary& vocab);

// Entity classification loss with one denominator shared by every positive
// and negative entity embedding. `v_cls` is 1 x P and unit norm; `z_pos` and
// `z_neg` are N x P. Returns a zero constant when no label is set.
Var ecls_loss(Var v_cls, Var z_pos, Var z_neg, std::span<const bool> labels, double tau);

}  // namespace gkmvlp
