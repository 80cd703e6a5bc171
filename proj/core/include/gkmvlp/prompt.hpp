#pragma once

#include <array>
#include <string>
#include <vector>

#include "gkmvlp/atlas.hpp"

namespace gkmvlp {

inline constexpr const char* kNoFindingSentence = "No abnormality is found";

// One (entity, position, existence) annotation.
struct EntityTriple {
  int entity = 0;
  std::vector<int> regions;  // atlas indices, ascending, unique
  bool exist = false;

  friend bool operator==(const EntityTriple&, const EntityTriple&) = default;
};

struct KnowledgePrompt {
  // Sorted by entity index; each entity at most once.
  std::vector<EntityTriple> triples;
  // One sentence per triple with exist == true, in entity order.
  std::vector<std::string> rendered;

  friend bool operator==(const KnowledgePrompt&, const KnowledgePrompt&) = default;
};

using LabelVector = std::array<bool, kNumEntities>;

// Validates and canonicalizes annotations. Exact duplicates collapse;
// conflicting duplicates and out-of-range indices throw ValidationError.
KnowledgePrompt build_prompt_set(const std::vector<EntityTriple>& annotations);

// "<Entity> is located at <region> and <region>".
std::string render_sentence(const EntityTriple& triple);

// Sentences joined with ". ". A prompt with no present entity renders the
// no-finding sentence so the prompt encoder never sees empty input.
std::string render_prompt_text(const KnowledgePrompt& prompt);

// The sentences an encoder consumes: `rendered`, or the no-finding sentence.
std::vector<std::string> prompt_sentences(const KnowledgePrompt& prompt);

LabelVector entity_label_vector(const KnowledgePrompt& prompt);

}  // namespace gkmvlp
