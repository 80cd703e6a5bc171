#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gkmvlp {

enum SpecialToken : int {
  kPad = 0,
  kCls = 1,
  kBos = 2,
  kEos = 3,
  kEnc = 4,
  kUnk = 5,
};
inline constexpr int kNumSpecialTokens = 6;

struct TokenSequence {
  std::vector<int> ids;
  std::vector<bool> mask;  // true for real tokens, false for padding
  bool truncated = false;

  [[nodiscard]] std::size_t size() const { return ids.size(); }
  // Number of unmasked positions.
  [[nodiscard]] std::size_t length() const;
};

// Lowercased word and punctuation pieces of `text`; letters and digits form
// words, every other non-space character is its own piece.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();
  // Words in id order (ids from kNumSpecialTokens upward).
  explicit Vocabulary(std::vector<std::string> words);

  [[nodiscard]] int size() const { return static_cast<int>(tokens_.size()); }
  [[nodiscard]] int id(std::string_view word) const;  // kUnk when unknown
  [[nodiscard]] const std::string& token(int id) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }
  // Non-special tokens in id order.
  [[nodiscard]] std::vector<std::string> words() const;

  // Word ids for `text` without any special token.
  [[nodiscard]] std::vector<int> encode_words(std::string_view text) const;
  // [start] + words (+ [EOS] if requested), truncated to max_len.
  [[nodiscard]] TokenSequence encode(std::string_view text, int start_token, int max_len,
                                     bool append_eos = false) const;
  // Space-joined words, stopping at [EOS] and skipping other specials.
  [[nodiscard]] std::string decode(const std::vector<int>& ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Frequency-sorted vocabulary (ties broken lexicographically) over the
// lowercased pieces of every corpus string.
Vocabulary build_tokenizer(const std::vector<std::string>& corpus);

// Appends [PAD] positions (masked out) until the sequence has `size` ids.
TokenSequence pad_to(TokenSequence seq, std::size_t size);

}  // namespace gkmvlp
