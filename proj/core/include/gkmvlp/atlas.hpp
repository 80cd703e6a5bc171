#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace gkmvlp {

inline constexpr int kNumRegions = 29;
inline constexpr int kNumEntities = 14;

// Fixed anatomical atlas and abnormality vocabulary. Index order is part of
// every file format and checkpoint, so it never changes.
class AtlasVocab {
 public:
  static const AtlasVocab& instance();

  [[nodiscard]] const std::array<std::string, kNumRegions>& regions() const { return regions_; }
  [[nodiscard]] const std::array<std::string, kNumEntities>& entities() const { return entities_; }
  [[nodiscard]] const std::array<std::string, kNumEntities>& negative_phrases() const {
    return negative_phrases_;
  }

  [[nodiscard]] const std::string& region(int index) const;
  [[nodiscard]] const std::string& entity(int index) const;
  [[nodiscard]] const std::string& negative_phrase(int index) const;
  [[nodiscard]] std::optional<int> region_index(std::string_view name) const;
  [[nodiscard]] std::optional<int> entity_index(std::string_view name) const;

 private:
  AtlasVocab();

  std::array<std::string, kNumRegions> regions_;
  std::array<std::string, kNumEntities> entities_;
  std::array<std::string, kNumEntities> negative_phrases_;
};

}  // namespace gkmvlp
