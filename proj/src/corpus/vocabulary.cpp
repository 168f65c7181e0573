#include "entmlm/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "entmlm/errors.hpp"

namespace entmlm {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return specials;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (const auto& s : special_tokens()) add(s);
}

void Vocabulary::add(const std::string& token) {
  if (ids_.contains(token)) throw ContractViolation("duplicate vocabulary token '" + token + "'");
  ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const Corpus& corpus, std::size_t min_frequency) {
  if (corpus.empty()) throw ContractViolation("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  auto count = [&](const std::string& text) {
    for (auto& w : split_words(text)) ++counts[w];
  };
  for (const auto& r : corpus) {
    count(r.title);
    count(r.abstract);
    for (const auto& a : r.authors) count(a);
    for (const auto& f : r.fos) count(f);
    count(r.venue);
    for (const auto& a : r.affiliations) count(a);
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [word, n] : counts) {
    if (n >= min_frequency) kept.emplace_back(word, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [word, n] : kept) {
    if (!v.contains(word)) v.add(word);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractViolation("token id " + std::to_string(id) + " out of vocabulary range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) {
    const TokenId t = id(w);
    // Literal special strings in text are not specials.
    ids.push_back(is_special(t) ? kUnkId : t);
  }
  return ids;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string content;
  for (const auto& t : tokens_) content += t + "\n";
  write_file_atomic(path, content);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  const auto& specials = special_tokens();
  if (lines.size() < specials.size() + 1) {
    throw ParseError("vocabulary needs the five specials and at least one token", lines.size());
  }
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (lines[i] != specials[i]) {
      throw ParseError("expected special token " + specials[i], i + 1);
    }
  }
  Vocabulary v;
  for (std::size_t i = specials.size(); i < lines.size(); ++i) {
    if (lines[i].empty() || v.contains(lines[i])) {
      throw ParseError("empty or duplicate vocabulary entry", i + 1);
    }
    v.add(lines[i]);
  }
  return v;
}

}  // namespace entmlm
