#include "gkmvlp/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "gkmvlp/errors.hpp"

namespace gkmvlp {
namespace {

const std::vector<std::string>& special_names() {
  static const std::vector<std::string> names{"[PAD]", "[CLS]", "[BOS]", "[EOS]", "[ENC]", "[UNK]"};
  return names;
}

}  // namespace

std::size_t TokenSequence::length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      word += static_cast<char>(std::tolower(c));
      continue;
    }
    if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
    if (!std::isspace(c)) out.emplace_back(1, raw);
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) : tokens_(special_names()) {
  for (auto& w : words) tokens_.push_back(std::move(w));
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    if (!index_.emplace(tokens_[static_cast<std::size_t>(i)], i).second) {
      throw ValidationError("duplicate vocabulary entry: " + tokens_[static_cast<std::size_t>(i)]);
    }
  }
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::words() const {
  return {tokens_.begin() + kNumSpecialTokens, tokens_.end()};
}

std::vector<int> Vocabulary::encode_words(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

TokenSequence Vocabulary::encode(std::string_view text, int start_token, int max_len, bool append_eos) const {
  TokenSequence seq;
  seq.ids.push_back(start_token);
  for (int id : encode_words(text)) seq.ids.push_back(id);
  if (append_eos) seq.ids.push_back(kEos);
  if (max_len > 0 && static_cast<int>(seq.ids.size()) > max_len) {
    seq.ids.resize(static_cast<std::size_t>(max_len));
    seq.truncated = true;
  }
  seq.mask.assign(seq.ids.size(), true);
  return seq;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id < kNumSpecialTokens) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

Vocabulary build_tokenizer(const std::vector<std::string>& corpus) {
  std::map<std::string, long> counts;
  for (const std::string& text : corpus) {
    for (std::string& w : split_words(text)) ++counts[std::move(w)];
  }
  std::vector<std::pair<std::string, long>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(sorted.size());
  for (auto& [w, c] : sorted) words.push_back(w);
  return Vocabulary(std::move(words));
}

TokenSequence pad_to(TokenSequence seq, std::size_t size) {
  while (seq.ids.size() < size) {
    seq.ids.push_back(kPad);
    seq.mask.push_back(false);
  }
  return seq;
}

}  // namespace gkmvlp
