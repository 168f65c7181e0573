#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "entmlm/corpus.hpp"
#include "entmlm/vocabulary.hpp"

namespace entmlm {

enum class EntityType : std::uint8_t { Text = 0, Author = 1, Fos = 2, Venue = 3, Affiliation = 4 };
inline constexpr int kNumEntityTypes = 5;

const char* entity_type_name(EntityType type);
/// Accepts "text", "author", "fos", "venue", "affiliation" (and "aff").
EntityType parse_entity_type(const std::string& name);

/// One entity inside a sample: a contiguous run of tokens sharing pos1.
struct EntitySpan {
  EntityType type = EntityType::Text;
  std::vector<TokenId> token_ids;
  int entity_index = 0;
  std::size_t begin = 0;  // offset of the first token in the sample

  std::size_t length() const { return token_ids.size(); }
};

/// Model input. All five arrays have equal length.
struct InputSample {
  std::vector<TokenId> token_ids;
  std::vector<int> type_ids;
  std::vector<int> pos1;  // inter-entity position
  std::vector<int> pos2;  // intra-entity position
  std::vector<int> attention_mask;

  std::size_t size() const { return token_ids.size(); }
  friend bool operator==(const InputSample&, const InputSample&) = default;
};

/// Which non-text entity types are placed after the text entity.
struct FeatureSet {
  bool authors = true;
  bool fos = true;
  bool venue = true;
  bool affiliations = true;

  static FeatureSet none() { return {false, false, false, false}; }
  static FeatureSet all() { return {}; }
  /// "title" (none), "author", "fos", "venue", "aff", "all", or a '+'-joined
  /// combination such as "fos+venue".
  static FeatureSet parse(const std::string& spec);
};

struct SampleOptions {
  std::size_t max_len = 128;
  std::uint64_t shuffle_seed = 0;
  bool include_abstract = true;
  FeatureSet features;
};

/// Text entity first ([CLS] title [abstract] [SEP]) followed by the selected
/// entities in a seeded-random order. Over-long samples lose whole trailing
/// entities first, then the tail of the text entity ([SEP] stays last).
/// Throws InvalidRecord when the title has no tokens.
InputSample build_sample(const PaperRecord& record, const Vocabulary& vocab,
                         const SampleOptions& options);

/// Text-only sample: [CLS] title , author sentence , abstract [SEP], truncated
/// at the tail.
InputSample build_text_sample(const PaperRecord& record, const Vocabulary& vocab,
                              std::size_t max_len);

/// Lays out a text entity (specials included) followed by `entities` in the
/// given order, assigning type ids and 2D positions.
InputSample assemble_sample(const std::vector<TokenId>& text_tokens,
                            const std::vector<std::pair<EntityType, std::vector<TokenId>>>& entities);

/// Recovers the entity spans of a sample from its pos1/type arrays.
std::vector<EntitySpan> entity_spans(const InputSample& sample);

/// Returns a description of the first violated structural invariant, if any.
std::optional<std::string> check_sample_invariants(const InputSample& sample);

}  // namespace entmlm
