#pragma once

#include <cstdint>
#include <vector>

#include "entmlm/rng.hpp"
#include "entmlm/sample.hpp"

namespace entmlm {

enum class MaskAction : std::uint8_t { Mask, Random, Keep };

struct MaskingPlan {
  std::vector<std::size_t> positions;  // strictly increasing
  std::vector<TokenId> labels;         // original ids at `positions`
  std::vector<MaskAction> actions;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

struct MaskingConfig {
  double text_mask_rate = 0.15;
  double entity_mask_rate = 0.15;
  double geometric_p = 0.2;
  int span_min = 4;
  int span_max = 10;
  int whole_entity_threshold = 4;  // entities shorter than this are masked whole
  double mask_prob = 0.8;
  double random_prob = 0.1;  // remainder is KEEP
  std::uint64_t seed = 0;

  void validate() const;
};

/// Probability of span length `l` under the geometric distribution truncated
/// to [span_min, span_max] and renormalized.
double span_length_pmf(const MaskingConfig& cfg, int l);
int sample_span_length(const MaskingConfig& cfg, Rng& rng);

/// Number of tokens to mask out of `maskable`: round-half-up of rate * n,
/// at least one when n > 0.
std::size_t masking_budget(double rate, std::size_t maskable);

/// BERT-style masking of text-entity tokens ([CLS]/[SEP] excluded).
MaskingPlan plan_text_masking(const InputSample& sample, const MaskingConfig& cfg, Rng& rng);

/// Span-aware masking of non-text entities. Short entities are masked whole;
/// longer ones get a contiguous span of truncated-geometric length. One
/// replacement action is drawn per span.
MaskingPlan plan_entity_masking(const InputSample& sample, const MaskingConfig& cfg, Rng& rng);

/// Union of two plans over disjoint positions.
MaskingPlan merge_plans(const MaskingPlan& a, const MaskingPlan& b);

/// Replaces MASK positions by [MASK] and RANDOM positions by a uniformly drawn
/// non-special id; everything else is left untouched.
InputSample apply_masking(const InputSample& sample, const MaskingPlan& plan,
                          std::size_t vocab_size, Rng& rng);

}  // namespace entmlm
