#include "gkmvlp/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {

KnowledgePrompt build_prompt_set(const std::vector<EntityTriple>& annotations) {
  const auto& atlas = AtlasVocab::instance();
  std::map<int, EntityTriple> by_entity;
  for (const EntityTriple& raw : annotations) {
    if (raw.entity < 0 || raw.entity >= kNumEntities) {
      throw ValidationError("entity index out of range: " + std::to_string(raw.entity));
    }
    EntityTriple t = raw;
    for (int r : t.regions) {
      if (r < 0 || r >= kNumRegions) {
        throw ValidationError("region index out of range for " + atlas.entity(t.entity) + ": " +
                              std::to_string(r));
      }
    }
    std::sort(t.regions.begin(), t.regions.end());
    t.regions.erase(std::unique(t.regions.begin(), t.regions.end()), t.regions.end());
    if (t.exist && t.regions.empty()) {
      throw ValidationError("present entity " + atlas.entity(t.entity) + " has no region");
    }
    auto [it, inserted] = by_entity.emplace(t.entity, t);
    if (!inserted && !(it->second == t)) {
      throw ValidationError("conflicting annotations for entity " + atlas.entity(t.entity));
    }
  }

  KnowledgePrompt prompt;
  for (auto& [entity, triple] : by_entity) {
    if (triple.exist) prompt.rendered.push_back(render_sentence(triple));
    prompt.triples.push_back(std::move(triple));
  }
  return prompt;
}

std::string render_sentence(const EntityTriple& triple) {
  const auto& atlas = AtlasVocab::instance();
  std::string s = atlas.entity(triple.entity);
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s += " is located at ";
  for (std::size_t i = 0; i < triple.regions.size(); ++i) {
    if (i > 0) s += " and ";
    s += atlas.region(triple.regions[i]);
  }
  return s;
}

std::vector<std::string> prompt_sentences(const KnowledgePrompt& prompt) {
  if (prompt.rendered.empty()) return {kNoFindingSentence};
  return prompt.rendered;
}

std::string render_prompt_text(const KnowledgePrompt& prompt) {
  std::string text;
  for (const std::string& s : prompt_sentences(prompt)) {
    if (!text.empty()) text += ". ";
    text += s;
  }
  return text;
}

LabelVector entity_label_vector(const KnowledgePrompt& prompt) {
  LabelVector y{};
  for (const EntityTriple& t : prompt.triples) {
    if (t.exist) y[static_cast<std::size_t>(t.entity)] = true;
  }
  return y;
}

}  // namespace gkmvlp
