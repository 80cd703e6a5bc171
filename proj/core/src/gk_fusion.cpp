#include "gkmvlp/gk_fusion.hpp"

#include <algorithm>
#include <cmath>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {

RegionPooling region_pooling(const std::array<Box, kNumRegions>& boxes, const EncoderConfig& cfg) {
  const int side = cfg.patches_per_side();
  RegionPooling out{Matrix::Zero(kNumRegions, 1 + cfg.num_patches()), std::vector<bool>(kNumRegions, false)};
  bool any = false;
  for (int k = 0; k < kNumRegions; ++k) {
    const Box& box = boxes[static_cast<std::size_t>(k)];
    std::vector<int> hits;
    for (int p = 0; p < cfg.num_patches(); ++p) {
      const double cx = (p % side + 0.5) * cfg.patch_size;
      const double cy = (p / side + 0.5) * cfg.patch_size;
      if (box.contains(cx, cy)) hits.push_back(p);
    }
    if (hits.empty()) continue;
    for (int p : hits) out.weights(k, 1 + p) = 1.0 / static_cast<double>(hits.size());
    out.valid[static_cast<std::size_t>(k)] = true;
    any = true;
  }
  if (!any) throw ValidationError("region boxes: no box contains a patch center");
  return out;
}

GroundingModule GroundingModule::create(ParameterStore& store, const EncoderConfig& enc,
                                        const FusionConfig& fusion, std::mt19937_64& rng) {
  GroundingModule m;
  const int h = enc.hidden_dim;
  const int np = enc.prompt_dim;
  m.region_embed_ = Linear::create(store, "gk.region_embed", h, enc.region_dim, rng);
  m.f_r_ = Linear::create(store, "gk.f_r", enc.region_dim, np, rng);
  if (np != h) m.prompt_adapter_ = Linear::create(store, "gk.prompt_adapter", h, np, rng);
  for (int l = 0; l < fusion.num_layers; ++l) {
    m.local_.push_back(FusionBlock::create(store, "gk.local" + std::to_string(l), np, fusion.num_heads,
                                           enc.ffn_dim, false, rng));
  }
  m.concat_ = Linear::create(store, "gk.concat", 2 * np, np, rng);
  if (np != h) m.global_adapter_ = Linear::create(store, "gk.global_adapter", np, h, rng);
  m.global_ = FusionBlock::create(store, "gk.global", h, fusion.num_heads, enc.ffn_dim, true, rng);
  return m;
}

RegionFeatures GroundingModule::extract_region_features(Graph& g, Var v, const RegionPooling& pooling,
                                                        bool frozen) const {
  if (v.rows() != pooling.weights.cols()) throw ShapeError("region pooling does not match the patch count");
  Var pooled = ops::matmul(g.constant(pooling.weights, "region_pooling"), v);
  return {ops::mask_rows(region_embed_(g, pooled, frozen), pooling.valid), pooling.valid};
}

Var GroundingModule::project_regions(Graph& g, const RegionFeatures& features, bool frozen) const {
  return ops::mask_rows(f_r_(g, features.R, frozen), features.valid);
}

Var GroundingModule::encode_prompt(Graph& g, const TextEncoder& text, const TokenSequence& prompt,
                                   bool frozen) const {
  ++counters_->encode_prompt;
  Var p = text.states(g, prompt, true);
  return prompt_adapter_ ? (*prompt_adapter_)(g, p, frozen) : p;
}

Var GroundingModule::fuse_local(Graph& g, Var z_r, Var p, const std::vector<bool>& prompt_mask, bool frozen,
                                FusionTrace* trace) const {
  ++counters_->fuse_local;
  const ops::AttentionMask mask{std::vector<bool>(prompt_mask.begin(), prompt_mask.begin() + p.rows()), false};
  if (trace) trace->local_attention.clear();
  Var x = z_r;
  for (const FusionBlock& block : local_) {
    Matrix weights;
    x = block(g, x, p, mask, frozen, trace ? &weights : nullptr);
    if (trace) trace->local_attention.push_back(std::move(weights));
  }
  return x;
}

Var GroundingModule::fuse_concat(Graph& g, Var z_r, Var p, const std::vector<bool>& prompt_mask,
                                 bool frozen) const {
  ++counters_->fuse_concat;
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (prompt_mask[static_cast<std::size_t>(i)]) keep.push_back(static_cast<int>(i));
  }
  if (keep.empty()) throw ShapeError("prompt has no unmasked token");
  Var pooled = ops::mean_rows(ops::gather_rows(p, keep));
  Var joined = ops::concat_cols({z_r, ops::repeat_rows(pooled, z_r.rows())});
  return concat_(g, joined, frozen);
}

Var GroundingModule::fuse_global(Graph& g, Var v, Var z_local, bool frozen) const {
  ++counters_->fuse_global;
  Var memory = global_adapter_ ? (*global_adapter_)(g, z_local, frozen) : z_local;
  return global_(g, v, memory, {}, frozen);
}

EntityEmbeddings encode_entities(const TextEncoder& text, const Vocabulary& vocab) {
  const AtlasVocab& atlas = AtlasVocab::instance();
  EntityEmbeddings out;
  Graph g(false);
  std::vector<Var> pos;
  std::vector<Var> neg;
  for (int d = 0; d < kNumEntities; ++d) {
    Var tp = text.states(g, vocab.encode(atlas.entity(d), kCls, text.max_len()), true);
    Var tn = text.states(g, vocab.encode(atlas.negative_phrase(d), kCls, text.max_len()), true);
    pos.push_back(ops::rows(tp, 0, 1));
    neg.push_back(ops::rows(tn, 0, 1));
  }
  out.pos = text.project(g, ops::concat_rows(pos), true).value();
  out.neg = text.project(g, ops::concat_rows(neg), true).value();
  return out;
}

Var ecls_loss(Var v_cls, Var z_pos, Var z_neg, std::span<const bool> labels, double tau) {
  if (!(tau > 0.0)) throw ConfigError("fusion.temperature must be positive");
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (z_pos.rows() != n || z_neg.rows() != n || v_cls.rows() != 1) {
    throw ShapeError("ecls_loss: entity tables and labels disagree");
  }
  Graph& g = v_cls.graph();
  if (std::none_of(labels.begin(), labels.end(), [](bool b) { return b; })) {
    return g.constant(Matrix::Zero(1, 1), "ecls_skipped");
  }
  Var logits = ops::scale(ops::matmul_nt(v_cls, ops::concat_rows({z_pos, z_neg})), 1.0 / tau);
  Matrix select = Matrix::Zero(1, 2 * n);
  for (Eigen::Index d = 0; d < n; ++d) select(0, labels[static_cast<std::size_t>(d)] ? d : n + d) = 1.0 / n;
  Var selected = ops::sum(ops::hadamard(logits, g.constant(select, "ecls_select")));
  return ops::sub(ops::logsumexp_rows(logits), selected);
}

}  // namespace gkmvlp
