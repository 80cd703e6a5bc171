#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/model.hpp"

namespace gkmvlp {

struct ClassificationReport {
  double fraction = 1.0;
  int train_samples = 0;
  std::array<std::optional<double>, kNumEntities> per_entity{};  // empty when undefined on the test split
  double mean_auroc = 0.0;
};

// Fine-tunes the image encoder with a 14-way linear head on z_I under binary
// cross-entropy, using a seed-determined `fraction` of `train`.
ClassificationReport finetune_classification(const Model& pretrained, const std::vector<PreparedSample>& train,
                                             const std::vector<PreparedSample>& test, double fraction,
                                             const FinetuneConfig& cfg, std::uint64_t seed);

// Per-entity AUROC of `scores` (samples x 14) against the sample labels.
ClassificationReport classification_report(const Matrix& scores, const std::vector<PreparedSample>& samples);

// Shared linear scorer over region features plus one bias per region.
struct RegionProbe {
  Matrix weight;  // F x 1
  Matrix bias;    // 1 x kNumRegions
  RowVector feature_mean;
  RowVector feature_scale;

  static RegionProbe random(int feature_dim, std::mt19937_64& rng);
  // Softmax probabilities over regions for one kNumRegions x F feature map.
  [[nodiscard]] RowVector predict(const Matrix& features) const;
};

RegionProbe train_region_probe(const std::vector<Matrix>& features, const std::vector<int>& targets,
                               const FinetuneConfig& cfg, std::uint64_t seed);

struct LocalizationReport {
  double accuracy = 0.0;
  double map50 = 0.0;
  int samples = 0;
};

LocalizationReport evaluate_region_probe(const RegionProbe& probe, const std::vector<Matrix>& features,
                                         const std::vector<int>& targets,
                                         const std::vector<std::array<Box, kNumRegions>>& boxes);

// Region-pooled fused features (kNumRegions x hidden) with every parameter
// frozen. Grounded variants fuse the neutral prompt; grounding none pools v.
Matrix region_feature_map(const Model& model, Grounding grounding, const PreparedSample& sample);

// Trains a probe on the single-entity samples of `train` and scores the
// single-entity samples of `test`.
LocalizationReport localization_probe(const Model& model, Grounding grounding,
                                      const std::vector<PreparedSample>& train,
                                      const std::vector<PreparedSample>& test, const FinetuneConfig& cfg,
                                      std::uint64_t seed);

struct GenerationReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  std::vector<std::string> candidates;
  std::vector<std::string> references;
};

// Fine-tunes the image encoder and the decoder on teacher-forced reports,
// then decodes `test` greedily.
GenerationReport finetune_generation(const Model& pretrained, Grounding grounding,
                                     const std::vector<PreparedSample>& train,
                                     const std::vector<PreparedSample>& test, const FinetuneConfig& cfg,
                                     std::uint64_t seed);

GenerationReport generate_reports(const Model& model, Grounding grounding, const std::vector<PreparedSample>& test,
                                  int max_len);

struct VqaReport {
  double open_acc = 0.0;
  double closed_acc = 0.0;
  double overall_acc = 0.0;
  int open_count = 0;
  int closed_count = 0;
};

// Answer classifier over z_IT[0] of image_report_encode(question, v).
struct AnswerHead {
  Linear linear;
};

VqaReport vqa_evaluate(const Model& model, const AnswerHead& head, const std::vector<PreparedSample>& samples);

// Fine-tunes the image encoder, the image-report encoder and a fresh answer
// head, then scores `test`.
VqaReport finetune_vqa(const Model& pretrained, const std::vector<PreparedSample>& train,
                       const std::vector<PreparedSample>& test, const FinetuneConfig& cfg, std::uint64_t seed);

// Parameters fine-tuning may update: the image encoder, plus the
// cross-modal stack when `include_cross_modal` is set. The GK module, the
// report encoder and the ITC temperature stay fixed.
std::vector<Parameter*> backbone_parameters(Model& model, bool include_cross_modal);

}  // namespace gkmvlp
