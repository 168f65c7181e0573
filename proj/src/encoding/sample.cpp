#include "entmlm/sample.hpp"

#include <algorithm>
#include <sstream>

#include "entmlm/errors.hpp"
#include "entmlm/rng.hpp"

namespace entmlm {

const char* entity_type_name(EntityType type) {
  switch (type) {
    case EntityType::Text: return "text";
    case EntityType::Author: return "author";
    case EntityType::Fos: return "fos";
    case EntityType::Venue: return "venue";
    case EntityType::Affiliation: return "affiliation";
  }
  return "unknown";
}

EntityType parse_entity_type(const std::string& name) {
  if (name == "text") return EntityType::Text;
  if (name == "author") return EntityType::Author;
  if (name == "fos") return EntityType::Fos;
  if (name == "venue") return EntityType::Venue;
  if (name == "affiliation" || name == "aff") return EntityType::Affiliation;
  throw ConfigError("unknown entity type '" + name + "'");
}

FeatureSet FeatureSet::parse(const std::string& spec) {
  if (spec == "all") return all();
  FeatureSet f = none();
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "title" || part.empty()) continue;
    if (part == "author") f.authors = true;
    else if (part == "fos") f.fos = true;
    else if (part == "venue") f.venue = true;
    else if (part == "aff") f.affiliations = true;
    else if (part == "all") f = all();
    else throw ConfigError("unknown feature '" + part + "' in '" + spec + "'");
  }
  return f;
}

InputSample assemble_sample(const std::vector<TokenId>& text_tokens,
                            const std::vector<std::pair<EntityType, std::vector<TokenId>>>& entities) {
  InputSample s;
  auto push = [&s](TokenId tok, EntityType type, int p1, int p2) {
    s.token_ids.push_back(tok);
    s.type_ids.push_back(static_cast<int>(type));
    s.pos1.push_back(p1);
    s.pos2.push_back(p2);
    s.attention_mask.push_back(tok == kPadId ? 0 : 1);
  };
  for (std::size_t i = 0; i < text_tokens.size(); ++i) {
    push(text_tokens[i], EntityType::Text, 0, static_cast<int>(i));
  }
  int index = text_tokens.empty() ? 0 : 1;
  for (const auto& [type, tokens] : entities) {
    if (tokens.empty()) continue;
    for (std::size_t i = 0; i < tokens.size(); ++i) push(tokens[i], type, index, static_cast<int>(i));
    ++index;
  }
  return s;
}

InputSample build_sample(const PaperRecord& record, const Vocabulary& vocab,
                         const SampleOptions& options) {
  if (options.max_len < 8) throw ContractViolation("max_len must be >= 8");
  std::vector<TokenId> body = vocab.tokenize(record.title);
  if (body.empty()) throw InvalidRecord("record " + record.paper_id + " has an empty title");
  if (options.include_abstract) {
    auto abs = vocab.tokenize(record.abstract);
    body.insert(body.end(), abs.begin(), abs.end());
  }

  std::vector<std::pair<EntityType, std::vector<TokenId>>> entities;
  auto add = [&](EntityType type, const std::string& name) {
    auto tokens = vocab.tokenize(name);
    if (!tokens.empty()) entities.emplace_back(type, std::move(tokens));
  };
  const FeatureSet& f = options.features;
  if (f.authors) for (const auto& a : record.authors) add(EntityType::Author, a);
  if (f.fos) for (const auto& x : record.fos) add(EntityType::Fos, x);
  if (f.venue && !record.venue.empty()) add(EntityType::Venue, record.venue);
  if (f.affiliations) for (const auto& a : record.affiliations) add(EntityType::Affiliation, a);

  Rng rng(options.shuffle_seed);
  std::shuffle(entities.begin(), entities.end(), rng);

  std::size_t total = body.size() + 2;
  for (const auto& e : entities) total += e.second.size();
  while (total > options.max_len && !entities.empty()) {
    total -= entities.back().second.size();
    entities.pop_back();
  }
  if (total > options.max_len) body.resize(options.max_len - 2);

  std::vector<TokenId> text;
  text.reserve(body.size() + 2);
  text.push_back(kClsId);
  text.insert(text.end(), body.begin(), body.end());
  text.push_back(kSepId);
  return assemble_sample(text, entities);
}

InputSample build_text_sample(const PaperRecord& record, const Vocabulary& vocab,
                              std::size_t max_len) {
  if (max_len < 8) throw ContractViolation("max_len must be >= 8");
  std::vector<TokenId> body = vocab.tokenize(record.title);
  if (body.empty()) throw InvalidRecord("record " + record.paper_id + " has an empty title");
  std::string author_sentence;
  for (std::size_t i = 0; i < record.authors.size(); ++i) {
    if (i > 0) author_sentence += " , ";
    author_sentence += record.authors[i];
  }
  for (const std::string* part : {static_cast<const std::string*>(&author_sentence), &record.abstract}) {
    auto toks = vocab.tokenize(*part);
    body.insert(body.end(), toks.begin(), toks.end());
  }
  if (body.size() + 2 > max_len) body.resize(max_len - 2);
  std::vector<TokenId> text;
  text.push_back(kClsId);
  text.insert(text.end(), body.begin(), body.end());
  text.push_back(kSepId);
  return assemble_sample(text, {});
}

std::vector<EntitySpan> entity_spans(const InputSample& sample) {
  std::vector<EntitySpan> spans;
  for (std::size_t t = 0; t < sample.size(); ++t) {
    if (sample.attention_mask[t] == 0) continue;
    if (spans.empty() || spans.back().entity_index != sample.pos1[t] ||
        spans.back().begin + spans.back().length() != t) {
      EntitySpan span;
      span.type = static_cast<EntityType>(sample.type_ids[t]);
      span.entity_index = sample.pos1[t];
      span.begin = t;
      spans.push_back(std::move(span));
    }
    spans.back().token_ids.push_back(sample.token_ids[t]);
  }
  return spans;
}

std::optional<std::string> check_sample_invariants(const InputSample& s) {
  const std::size_t n = s.token_ids.size();
  if (s.type_ids.size() != n || s.pos1.size() != n || s.pos2.size() != n ||
      s.attention_mask.size() != n) {
    return "array lengths differ";
  }
  if (n == 0) return "empty sample";
  int expected_entity = -1;
  for (std::size_t t = 0; t < n; ++t) {
    if (s.attention_mask[t] == 0) continue;
    if (s.type_ids[t] < 0 || s.type_ids[t] >= kNumEntityTypes) {
      return "type id out of range at " + std::to_string(t);
    }
    const bool starts = t == 0 || s.pos1[t] != s.pos1[t - 1] || s.attention_mask[t - 1] == 0;
    if (starts) {
      ++expected_entity;
      if (s.pos1[t] != expected_entity) {
        return "pos1 not consecutive at " + std::to_string(t);
      }
      if (s.pos2[t] != 0) return "pos2 does not restart at 0 at " + std::to_string(t);
    } else {
      if (s.pos2[t] != s.pos2[t - 1] + 1) return "pos2 not consecutive at " + std::to_string(t);
      if (s.type_ids[t] != s.type_ids[t - 1]) return "type id changes inside entity at " + std::to_string(t);
    }
  }
  if (expected_entity < 0) return "no real tokens";
  if (s.type_ids[0] != static_cast<int>(EntityType::Text) || s.pos1[0] != 0) {
    return "sample does not start with the text entity";
  }
  return std::nullopt;
}

}  // namespace entmlm
