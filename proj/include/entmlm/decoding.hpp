#pragma once

#include <span>
#include <string>
#include <vector>

#include "entmlm/model.hpp"
#include "entmlm/sample.hpp"
#include "entmlm/vocabulary.hpp"

namespace entmlm {

enum class DecodeOrder { OutOfOrder, LeftToRight };

const char* decode_order_name(DecodeOrder order);
/// "out-of-order" or "left-to-right".
DecodeOrder parse_decode_order(const std::string& name);

struct DecodeQuery {
  std::string title;
  std::string abstract;  // empty: not used
  std::string prompt;    // appended to the text entity, e.g. "field of study :"
  EntityType target = EntityType::Fos;
  std::size_t min_length = 1;
  std::size_t max_length = 4;
  DecodeOrder order = DecodeOrder::OutOfOrder;
  std::size_t beam_width = 16;
  double alpha = 0.0;  // score = total / length^alpha
  std::size_t top_k = 10;
  std::size_t max_len = 128;

  void validate() const;
};

/// Default generation length range for a target entity type.
std::pair<std::size_t, std::size_t> default_length_range(EntityType type);

struct DecodeStep {
  std::size_t position = 0;  // index inside the target entity
  TokenId token = kPadId;
  double log_prob = 0.0;
};

struct DecodeCandidate {
  std::vector<TokenId> tokens;
  double total = 0.0;
  double normalized = 0.0;
  std::vector<DecodeStep> trace;   // in decoding order
  std::size_t candidate_index = 0; // position in the caller's candidate list
};

/// [CLS] title [abstract] prompt [SEP] followed by `length` [MASK] tokens
/// forming one new entity of the target type. Over-long queries lose the
/// abstract tail first, then the title tail; the mask entity is never cut.
InputSample build_masked_query(const DecodeQuery& query, std::size_t length, const Vocabulary& vocab,
                               const ModelConfig& config);

/// Scores `tokens` in the mask entity occupying the last tokens.size()
/// positions of `query_sample`. Each step runs the encoder once and fills the
/// next position: lowest index for LeftToRight; for OutOfOrder, the position
/// where the candidate's own token is most probable.
DecodeCandidate score_candidate(const Model& model, const InputSample& query_sample,
                                std::span<const TokenId> tokens, DecodeOrder order, double alpha);

DecodeCandidate score_candidate(const Model& model, const Vocabulary& vocab, const DecodeQuery& query,
                                std::span<const TokenId> tokens);

/// Descending normalized score; ties by ascending token sequence, then by
/// input position.
void sort_candidates(std::vector<DecodeCandidate>& candidates);

std::vector<DecodeCandidate> rank_candidates(const Model& model, const Vocabulary& vocab,
                                             const DecodeQuery& query,
                                             const std::vector<std::vector<TokenId>>& candidates);

/// Beam search for every length in [min_length, max_length]. Each beam picks
/// its own expansion position (OutOfOrder: the position with the most
/// confident token) and branches on its top non-special tokens, at most
/// beam_width of them; the pool is pruned to beam_width after each step.
/// Completed hypotheses are rescored with score_candidate, pooled across
/// lengths and the top_k are returned.
std::vector<DecodeCandidate> generate(const Model& model, const Vocabulary& vocab, const DecodeQuery& query);

/// One line-delimited JSON record: tokens, text, total, normalized, trace.
std::string candidate_to_json(const DecodeCandidate& candidate, const Vocabulary& vocab);

}  // namespace entmlm
