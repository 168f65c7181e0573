#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entmlm/corpus.hpp"

namespace entmlm {

using TokenId = int;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr TokenId kNumSpecials = 5;

/// Lowercases and splits on whitespace; each punctuation character becomes
/// its own piece.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  /// Specials only.
  Vocabulary();

  /// Every token seen at least `min_frequency` times in titles, abstracts and
  /// entity names, ordered by frequency (descending) then lexicographically.
  static Vocabulary build(const Corpus& corpus, std::size_t min_frequency);
  static Vocabulary from_tokens(const std::vector<std::string>& words);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Total; never emits special ids other than [UNK].
  std::vector<TokenId> tokenize(std::string_view text) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

const std::vector<std::string>& special_tokens();
inline bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

}  // namespace entmlm
