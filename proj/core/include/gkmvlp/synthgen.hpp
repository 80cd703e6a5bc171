#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gkmvlp/record.hpp"

namespace gkmvlp {

struct SynthConfig {
  int num_samples = 256;
  int image_size = 64;
  // Patch size of the encoder the data will be paired with.
  int patch_size = 8;
  std::uint64_t seed = 0;
  int min_entities_per_sample = 1;
  int max_entities_per_sample = 3;
  double prob_normal = 0.2;
  double noise_std = 0.02;
  double texture_amplitude = 0.6;
  // pretrain, train, val, test
  std::array<double, 4> split_fractions{1.0, 0.0, 0.0, 0.0};
};

// Throws ConfigError on an invalid configuration, including image sizes whose
// grid cells cannot host a texture or contain no patch center.
void validate(const SynthConfig& cfg);

inline constexpr int kGridColumns = 6;
inline constexpr int kGridRows = 5;

// Region k occupies grid cell k in row-major order; the last cell is unused.
std::array<Box, kNumRegions> grid_boxes(int image_size);

// Atlas regions in which entity d may be planted.
const std::vector<int>& designated_regions(int entity);

// Smooth, noise-free chest-like background.
Image render_background(int image_size);

// Unit-amplitude texture of `entity` centered in `box`; zero outside it.
Image render_texture(int entity, const Box& box, int image_size);

// Nearest-template entity classifier for the texture inside `box`.
int classify_texture(const Image& image, const Box& box, double amplitude);

// Split sizes for `num_samples` under `fractions` (largest remainder).
std::array<int, 4> split_counts(int num_samples, const std::array<double, 4>& fractions);

// Record `index` of the dataset; a pure function of (cfg, index).
SampleRecord generate_sample(const SynthConfig& cfg, int index);

// All records in index order. The result does not depend on `workers`.
std::vector<SampleRecord> generate_dataset(const SynthConfig& cfg, int workers = 1);

// Closed questions for three entities and one open location question per
// present entity, seeded from the sample id.
std::vector<QAPair> make_qa_pairs(const SampleRecord& record);

// Neutral report sentences mixed into every synthetic report.
const std::array<const char*, 8>& filler_sentences();

}  // namespace gkmvlp
