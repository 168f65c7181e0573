#include "entmlm/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "entmlm/errors.hpp"

namespace entmlm {

namespace {

MaskAction draw_action(const MaskingConfig& cfg, Rng& rng) {
  const double u = uniform01(rng);
  if (u < cfg.mask_prob) return MaskAction::Mask;
  if (u < cfg.mask_prob + cfg.random_prob) return MaskAction::Random;
  return MaskAction::Keep;
}

bool is_text_maskable(const InputSample& s, std::size_t t) {
  return s.attention_mask[t] == 1 && s.type_ids[t] == static_cast<int>(EntityType::Text) &&
         s.token_ids[t] != kClsId && s.token_ids[t] != kSepId && s.token_ids[t] != kPadId;
}

struct Span {
  std::size_t begin;
  std::size_t length;
  MaskAction action;
};

}  // namespace

void MaskingConfig::validate() const {
  auto in_open_unit = [](double x) { return x > 0.0 && x < 1.0; };
  if (!in_open_unit(text_mask_rate) || !in_open_unit(entity_mask_rate)) {
    throw ConfigError("masking rates must lie in (0, 1)");
  }
  if (!in_open_unit(geometric_p)) throw ConfigError("geometric p must lie in (0, 1)");
  if (span_min < 4 || span_max < span_min) {
    throw ConfigError("span length bounds must satisfy 4 <= low <= high");
  }
  if (whole_entity_threshold < 1) throw ConfigError("whole-entity threshold must be >= 1");
  if (mask_prob < 0.0 || random_prob < 0.0 || mask_prob + random_prob > 1.0) {
    throw ConfigError("replacement probabilities must be non-negative and sum to <= 1");
  }
}

double span_length_pmf(const MaskingConfig& cfg, int l) {
  if (l < cfg.span_min || l > cfg.span_max) return 0.0;
  const double q = 1.0 - cfg.geometric_p;
  const double norm = 1.0 - std::pow(q, cfg.span_max - cfg.span_min + 1);
  return cfg.geometric_p * std::pow(q, l - cfg.span_min) / norm;
}

int sample_span_length(const MaskingConfig& cfg, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (int l = cfg.span_min; l < cfg.span_max; ++l) {
    cumulative += span_length_pmf(cfg, l);
    if (u < cumulative) return l;
  }
  return cfg.span_max;
}

std::size_t masking_budget(double rate, std::size_t maskable) {
  if (maskable == 0) return 0;
  const auto rounded = static_cast<std::size_t>(std::floor(rate * static_cast<double>(maskable) + 0.5));
  return std::clamp<std::size_t>(rounded, 1, maskable);
}

MaskingPlan plan_text_masking(const InputSample& sample, const MaskingConfig& cfg, Rng& rng) {
  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < sample.size(); ++t) {
    if (is_text_maskable(sample, t)) candidates.push_back(t);
  }
  MaskingPlan plan;
  const std::size_t budget = masking_budget(cfg.text_mask_rate, candidates.size());
  // Partial Fisher-Yates: the first `budget` entries become a uniform subset.
  for (std::size_t i = 0; i < budget; ++i) {
    std::swap(candidates[i], candidates[uniform_index(rng, i, candidates.size() - 1)]);
  }
  candidates.resize(budget);
  std::sort(candidates.begin(), candidates.end());
  for (std::size_t pos : candidates) {
    plan.positions.push_back(pos);
    plan.labels.push_back(sample.token_ids[pos]);
    plan.actions.push_back(draw_action(cfg, rng));
  }
  return plan;
}

MaskingPlan plan_entity_masking(const InputSample& sample, const MaskingConfig& cfg, Rng& rng) {
  std::vector<EntitySpan> entities;
  std::size_t total = 0;
  for (auto& e : entity_spans(sample)) {
    if (e.type == EntityType::Text) continue;
    total += e.length();
    entities.push_back(std::move(e));
  }
  MaskingPlan plan;
  if (entities.empty()) return plan;

  std::vector<std::size_t> order(entities.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t budget = masking_budget(cfg.entity_mask_rate, total);
  std::vector<Span> chosen;
  std::optional<Span> first_candidate;
  std::size_t masked = 0;
  for (std::size_t idx : order) {
    if (masked >= budget) break;
    const EntitySpan& e = entities[idx];
    const std::size_t len = e.length();
    Span span{e.begin, len, MaskAction::Mask};
    if (len >= static_cast<std::size_t>(cfg.whole_entity_threshold)) {
      const auto l = static_cast<std::size_t>(sample_span_length(cfg, rng));
      if (l < len) span = Span{e.begin + uniform_index(rng, 0, len - l), l, MaskAction::Mask};
    }
    span.action = draw_action(cfg, rng);
    if (!first_candidate) first_candidate = span;
    // Take the span if it fits, or if overshooting lands closer to the budget
    // than stopping short would.
    const std::size_t after = masked + span.length;
    if (after <= budget || after - budget < budget - masked) {
      chosen.push_back(span);
      masked = after;
    }
  }
  if (chosen.empty()) chosen.push_back(*first_candidate);

  std::sort(chosen.begin(), chosen.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
  for (const Span& s : chosen) {
    for (std::size_t t = s.begin; t < s.begin + s.length; ++t) {
      plan.positions.push_back(t);
      plan.labels.push_back(sample.token_ids[t]);
      plan.actions.push_back(s.action);
    }
  }
  return plan;
}

MaskingPlan merge_plans(const MaskingPlan& a, const MaskingPlan& b) {
  MaskingPlan out;
  std::size_t i = 0, j = 0;
  auto take = [&out](const MaskingPlan& p, std::size_t k) {
    out.positions.push_back(p.positions[k]);
    out.labels.push_back(p.labels[k]);
    out.actions.push_back(p.actions[k]);
  };
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a.positions[i] < b.positions[j])) {
      take(a, i++);
    } else if (i == a.size() || b.positions[j] < a.positions[i]) {
      take(b, j++);
    } else {
      throw ContractViolation("masking plans overlap at position " + std::to_string(a.positions[i]));
    }
  }
  return out;
}

InputSample apply_masking(const InputSample& sample, const MaskingPlan& plan,
                          std::size_t vocab_size, Rng& rng) {
  if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) {
    throw ContractViolation("vocabulary has no non-special tokens");
  }
  InputSample out = sample;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const std::size_t pos = plan.positions[k];
    if (pos >= sample.size()) {
      throw ContractViolation("masking position " + std::to_string(pos) + " outside sample of length " +
                              std::to_string(sample.size()));
    }
    switch (plan.actions[k]) {
      case MaskAction::Mask: out.token_ids[pos] = kMaskId; break;
      case MaskAction::Random:
        out.token_ids[pos] = static_cast<TokenId>(uniform_index(rng, kNumSpecials, vocab_size - 1));
        break;
      case MaskAction::Keep: break;
    }
  }
  return out;
}

}  // namespace entmlm
