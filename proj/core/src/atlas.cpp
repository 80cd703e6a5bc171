#include "gkmvlp/atlas.hpp"

#include <stdexcept>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {

AtlasVocab::AtlasVocab()
    : regions_{"right lung",
               "right upper lung zone",
               "right mid lung zone",
               "right lower lung zone",
               "right hilar structures",
               "right apical zone",
               "right costophrenic angle",
               "right hemidiaphragm",
               "left lung",
               "left upper lung zone",
               "left mid lung zone",
               "left lower lung zone",
               "left hilar structures",
               "left apical zone",
               "left costophrenic angle",
               "left hemidiaphragm",
               "trachea",
               "spine",
               "right clavicle",
               "left clavicle",
               "aortic arch",
               "mediastinum",
               "upper mediastinum",
               "superior vena cava",
               "cardiac silhouette",
               "cavoatrial junction",
               "right atrium",
               "carina",
               "abdomen"},
      entities_{"atelectasis", "cardiomegaly", "effusion",     "infiltration",
                "mass",        "nodule",       "pneumonia",    "pneumothorax",
                "consolidation", "edema",      "emphysema",    "fibrosis",
                "pleural thickening", "hernia"} {
  for (int d = 0; d < kNumEntities; ++d) negative_phrases_[d] = "no " + entities_[d];
}

const AtlasVocab& AtlasVocab::instance() {
  static const AtlasVocab vocab;
  return vocab;
}

const std::string& AtlasVocab::region(int index) const {
  if (index < 0 || index >= kNumRegions) {
    throw ValidationError("region index out of range: " + std::to_string(index));
  }
  return regions_[static_cast<std::size_t>(index)];
}

const std::string& AtlasVocab::entity(int index) const {
  if (index < 0 || index >= kNumEntities) {
    throw ValidationError("entity index out of range: " + std::to_string(index));
  }
  return entities_[static_cast<std::size_t>(index)];
}

const std::string& AtlasVocab::negative_phrase(int index) const {
  (void)entity(index);  // range check
  return negative_phrases_[static_cast<std::size_t>(index)];
}

std::optional<int> AtlasVocab::region_index(std::string_view name) const {
  for (int k = 0; k < kNumRegions; ++k) {
    if (regions_[static_cast<std::size_t>(k)] == name) return k;
  }
  return std::nullopt;
}

std::optional<int> AtlasVocab::entity_index(std::string_view name) const {
  for (int d = 0; d < kNumEntities; ++d) {
    if (entities_[static_cast<std::size_t>(d)] == name) return d;
  }
  return std::nullopt;
}

}  // namespace gkmvlp
