#include "gkmvlp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Texture of `entity` at a pixel, given its offset from the box center
// (dx, dy) and from the box origin (ix, iy). Values lie in [0, 1].
double pattern(int entity, double dx, double dy, int ix, int iy) {
  const double r2 = dx * dx + dy * dy;
  const double r = std::sqrt(r2);
  const double envelope = std::exp(-r2 / (2.0 * 3.0 * 3.0));
  switch (entity) {
    case 0: return std::exp(-r2 / (2.0 * 1.3 * 1.3));
    case 1: return std::exp(-r2 / (2.0 * 2.6 * 2.6));
    case 2: return std::exp(-(r - 2.2) * (r - 2.2) / (2.0 * 0.6 * 0.6));
    case 3: return std::exp(-(r - 3.8) * (r - 3.8) / (2.0 * 0.6 * 0.6));
    case 4: return envelope * (iy % 2 == 0 ? 1.0 : 0.0);
    case 5: return envelope * (iy % 4 < 2 ? 1.0 : 0.0);
    case 6: return envelope * (ix % 2 == 0 ? 1.0 : 0.0);
    case 7: return envelope * (ix % 4 < 2 ? 1.0 : 0.0);
    case 8: return envelope * ((ix + iy) % 3 == 0 ? 1.0 : 0.0);
    case 9: return envelope * (((ix - iy) % 3 + 3) % 3 == 0 ? 1.0 : 0.0);
    case 10: return envelope * ((ix + iy) % 2 == 0 ? 1.0 : 0.0);
    case 11: return envelope * ((ix / 2 + iy / 2) % 2 == 0 ? 1.0 : 0.0);
    case 12: {
      const double ax = std::abs(dx);
      const double ay = std::abs(dy);
      return (std::max(ax, ay) > 2.0 && std::max(ax, ay) < 3.5) ? 1.0 : 0.0;
    }
    case 13: return (r < 4.0 && (std::abs(dx) < 1.0 || std::abs(dy) < 1.0)) ? 1.0 : 0.0;
    default: throw ValidationError("entity index out of range: " + std::to_string(entity));
  }
}

std::string sample_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%05d", index);
  return buf;
}

Split split_for(int index, const std::array<int, 4>& counts) {
  int edge = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    edge += counts[s];
    if (index < edge) return static_cast<Split>(s);
  }
  return Split::kTest;
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.num_samples <= 0) throw ConfigError("num_samples must be positive");
  if (cfg.patch_size <= 0) throw ConfigError("patch_size must be positive");
  if (cfg.image_size <= 0 || cfg.image_size % cfg.patch_size != 0) {
    throw ConfigError("image_size must be a positive multiple of patch_size");
  }
  if (cfg.max_entities_per_sample < 0 || cfg.max_entities_per_sample > kNumEntities) {
    throw ConfigError("max_entities_per_sample must be in [0, 14]");
  }
  if (cfg.min_entities_per_sample < 0 || cfg.min_entities_per_sample > cfg.max_entities_per_sample) {
    throw ConfigError("min_entities_per_sample must be in [0, max_entities_per_sample]");
  }
  if (cfg.prob_normal < 0.0 || cfg.prob_normal > 1.0) throw ConfigError("prob_normal must be in [0, 1]");
  if (cfg.noise_std < 0.0) throw ConfigError("noise_std must be nonnegative");
  if (cfg.texture_amplitude <= 0.0 || cfg.texture_amplitude > 1.0) {
    throw ConfigError("texture_amplitude must be in (0, 1]");
  }
  double total = 0.0;
  for (double f : cfg.split_fractions) {
    if (f < 0.0) throw ConfigError("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  // Every cell must be at least 2x2 pixels and contain a patch center.
  const auto boxes = grid_boxes(cfg.image_size);
  for (const Box& b : boxes) {
    if (b.width() < 2 || b.height() < 2) {
      throw ConfigError("image_size " + std::to_string(cfg.image_size) + " is too small for the region grid");
    }
    bool has_center = false;
    for (int py = 0; py < cfg.image_size / cfg.patch_size && !has_center; ++py) {
      for (int px = 0; px < cfg.image_size / cfg.patch_size && !has_center; ++px) {
        has_center = b.contains((px + 0.5) * cfg.patch_size, (py + 0.5) * cfg.patch_size);
      }
    }
    if (!has_center) {
      throw ConfigError("image_size " + std::to_string(cfg.image_size) +
                        " leaves a region cell without any patch center");
    }
  }
}

std::array<Box, kNumRegions> grid_boxes(int image_size) {
  std::array<Box, kNumRegions> boxes{};
  for (int k = 0; k < kNumRegions; ++k) {
    const int row = k / kGridColumns;
    const int col = k % kGridColumns;
    boxes[static_cast<std::size_t>(k)] = Box{col * image_size / kGridColumns, row * image_size / kGridRows,
                                             (col + 1) * image_size / kGridColumns,
                                             (row + 1) * image_size / kGridRows};
  }
  return boxes;
}

const std::vector<int>& designated_regions(int entity) {
  static const std::array<std::vector<int>, kNumEntities> table{{
      {2, 3, 10, 11},              // atelectasis
      {24},                        // cardiomegaly
      {6, 14},                     // effusion
      {1, 2, 3, 9, 10, 11},        // infiltration
      {1, 2, 4, 9, 10, 12},        // mass
      {1, 2, 3, 5, 9, 10, 11, 13}, // nodule
      {2, 3, 10, 11},              // pneumonia
      {1, 5, 9, 13},               // pneumothorax
      {2, 3, 10, 11},              // consolidation
      {0, 8},                      // edema
      {1, 5, 9, 13},               // emphysema
      {1, 5, 9, 13},               // fibrosis
      {5, 6, 13, 14},              // pleural thickening
      {28},                        // hernia
  }};
  if (entity < 0 || entity >= kNumEntities) {
    throw ValidationError("entity index out of range: " + std::to_string(entity));
  }
  return table[static_cast<std::size_t>(entity)];
}

Image render_background(int image_size) {
  Image bg(image_size, image_size);
  const double n = image_size;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const double u = (x + 0.5) / n;
      const double v = (y + 0.5) / n;
      bg(y, x) = 0.2 + 0.07 * std::sin(M_PI * u) * std::sin(M_PI * v) + 0.05 * v;
    }
  }
  return bg;
}

Image render_texture(int entity, const Box& box, int image_size) {
  Image tex = Image::Zero(image_size, image_size);
  const double cx = 0.5 * (box.x0 + box.x1);
  const double cy = 0.5 * (box.y0 + box.y1);
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      tex(y, x) = pattern(entity, x + 0.5 - cx, y + 0.5 - cy, x - box.x0, y - box.y0);
    }
  }
  return tex;
}

int classify_texture(const Image& image, const Box& box, double amplitude) {
  const int size = static_cast<int>(image.rows());
  const Image residual = (image - render_background(size)).block(box.y0, box.x0, box.height(), box.width());
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int d = 0; d < kNumEntities; ++d) {
    const Image tmpl = amplitude * render_texture(d, box, size).block(box.y0, box.x0, box.height(), box.width());
    const double dist = (residual - tmpl).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = d;
    }
  }
  return best;
}

std::array<int, 4> split_counts(int num_samples, const std::array<double, 4>& fractions) {
  std::array<int, 4> counts{};
  std::array<double, 4> remainder{};
  int assigned = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    const double exact = fractions[s] * num_samples;
    counts[s] = static_cast<int>(std::floor(exact));
    remainder[s] = exact - counts[s];
    assigned += counts[s];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < num_samples; ++i, ++assigned) ++counts[order[i % 4]];
  return counts;
}

const std::array<const char*, 8>& filler_sentences() {
  static const std::array<const char*, 8> pool{
      "The heart size is normal",
      "The mediastinal contours are unremarkable",
      "No acute osseous abnormality is seen",
      "The trachea is midline",
      "Lung volumes are preserved",
      "There is no free air under the diaphragm",
      "The visualized soft tissues are unremarkable",
      "No support devices are present",
  };
  return pool;
}

SampleRecord generate_sample(const SynthConfig& cfg, int index) {
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SampleRecord r;
  r.sample_id = sample_id(index);
  r.split = split_for(index, split_counts(cfg.num_samples, cfg.split_fractions));
  r.region_boxes = grid_boxes(cfg.image_size);

  std::vector<EntityTriple> triples;
  std::array<bool, kNumEntities> present{};
  std::array<bool, kNumRegions> occupied{};
  const bool normal = unit(rng) < cfg.prob_normal || cfg.max_entities_per_sample == 0;
  if (!normal) {
    std::uniform_int_distribution<int> count_dist(std::max(1, cfg.min_entities_per_sample),
                                                  std::max(1, cfg.max_entities_per_sample));
    const int wanted = count_dist(rng);
    std::array<int, kNumEntities> order{};
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    int placed = 0;
    for (int entity : order) {
      if (placed == wanted) break;
      std::vector<int> free;
      for (int k : designated_regions(entity)) {
        if (!occupied[static_cast<std::size_t>(k)]) free.push_back(k);
      }
      if (free.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
      const int region = free[pick(rng)];
      occupied[static_cast<std::size_t>(region)] = true;
      present[static_cast<std::size_t>(entity)] = true;
      triples.push_back(EntityTriple{entity, {region}, true});
      ++placed;
    }
  }
  for (int d = 0; d < kNumEntities; ++d) {
    if (!present[static_cast<std::size_t>(d)]) triples.push_back(EntityTriple{d, {}, false});
  }
  r.prompt = build_prompt_set(triples);
  r.label_vector = entity_label_vector(r.prompt);

  Image image = render_background(cfg.image_size);
  if (cfg.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (Eigen::Index i = 0; i < image.size(); ++i) image.data()[i] += noise(rng);
  }
  for (const EntityTriple& t : r.prompt.triples) {
    if (!t.exist) continue;
    for (int k : t.regions) {
      image += cfg.texture_amplitude * render_texture(t.entity, r.region_boxes[static_cast<std::size_t>(k)],
                                                      cfg.image_size);
    }
  }
  r.image = quantize_8bit(image.cwiseMax(0.0).cwiseMin(1.0));

  const auto& fillers = filler_sentences();
  std::uniform_int_distribution<std::size_t> filler_pick(0, fillers.size() - 1);
  std::string report;
  for (const std::string& s : prompt_sentences(r.prompt)) report += s + ". ";
  report += fillers[filler_pick(rng)];
  report += ".";
  r.report = std::move(report);

  r.qa_pairs = make_qa_pairs(r);
  return r;
}

std::vector<SampleRecord> generate_dataset(const SynthConfig& cfg, int workers) {
  validate(cfg);
  std::vector<SampleRecord> records(static_cast<std::size_t>(cfg.num_samples));
  workers = std::clamp(workers, 1, cfg.num_samples);
  if (workers == 1) {
    for (int i = 0; i < cfg.num_samples; ++i) records[static_cast<std::size_t>(i)] = generate_sample(cfg, i);
    return records;
  }
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < cfg.num_samples; i += workers) {
        records[static_cast<std::size_t>(i)] = generate_sample(cfg, i);
      }
    });
  }
  pool.clear();
  return records;
}

std::vector<QAPair> make_qa_pairs(const SampleRecord& record) {
  const auto& atlas = AtlasVocab::instance();
  std::mt19937_64 rng(splitmix64(fnv1a(record.sample_id)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<int> positives;
  std::vector<int> negatives;
  for (int d = 0; d < kNumEntities; ++d) {
    (record.label_vector[static_cast<std::size_t>(d)] ? positives : negatives).push_back(d);
  }
  std::shuffle(positives.begin(), positives.end(), rng);
  std::shuffle(negatives.begin(), negatives.end(), rng);

  // Closed questions lean toward present entities so yes/no stays balanced.
  std::vector<QAPair> qa;
  std::size_t next_pos = 0;
  std::size_t next_neg = 0;
  for (int q = 0; q < 3; ++q) {
    const bool want_positive = unit(rng) < 0.5;
    int entity = 0;
    bool exists = false;
    if ((want_positive && next_pos < positives.size()) || next_neg >= negatives.size()) {
      entity = positives[next_pos++];
      exists = true;
    } else {
      entity = negatives[next_neg++];
    }
    qa.push_back(QAPair{"Is " + atlas.entity(entity) + " present?", exists ? kAnswerYes : kAnswerNo});
  }
  for (const EntityTriple& t : record.prompt.triples) {
    if (!t.exist) continue;
    qa.push_back(QAPair{"Where is " + atlas.entity(t.entity) + "?", answer_for_region(t.regions.front())});
  }
  return qa;
}

}  // namespace gkmvlp
