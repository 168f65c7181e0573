#include <algorithm>
#include <map>

#include "entmlm/errors.hpp"
#include "entmlm/evaluation.hpp"

namespace entmlm {

void InferenceTask::validate() const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].candidates.size() < 2) throw ConfigError("item " + std::to_string(i) + " has fewer than 2 candidates");
    if (items[i].gold_index >= items[i].candidates.size()) {
      throw ConfigError("item " + std::to_string(i) + " has gold index outside its candidate list");
    }
  }
}

std::string setting_name(const ZeroShotSettings& s) {
  if (s.use_prompt && s.use_abstract) return "+both";
  if (s.use_prompt) return "+prompt";
  if (s.use_abstract) return "+abstract";
  return "plain";
}

ZeroShotSettings parse_setting(const std::string& name) {
  ZeroShotSettings s;
  if (name == "plain") return s;
  if (name == "+prompt" || name == "prompt") {
    s.use_prompt = true;
  } else if (name == "+abstract" || name == "abstract") {
    s.use_abstract = true;
  } else if (name == "+both" || name == "both") {
    s.use_prompt = s.use_abstract = true;
  } else {
    throw ConfigError("unknown setting '" + name + "'");
  }
  return s;
}

std::string default_prompt(EntityType type) {
  switch (type) {
    case EntityType::Fos: return "field of study :";
    case EntityType::Venue: return "journal or venue :";
    case EntityType::Affiliation: return "affiliations :";
    case EntityType::Author: return "authors :";
    case EntityType::Text: return "";
  }
  return "";
}

std::pair<double, double> hit_and_mrr(const std::vector<std::size_t>& gold_ranks) {
  if (gold_ranks.empty()) return {0.0, 0.0};
  double hits = 0.0, rr = 0.0;
  for (std::size_t r : gold_ranks) {
    if (r == 0) throw ContractViolation("ranks are 1-based");
    if (r == 1) hits += 1.0;
    rr += 1.0 / static_cast<double>(r);
  }
  const auto n = static_cast<double>(gold_ranks.size());
  return {hits / n, rr / n};
}

ZeroShotResult evaluate_zero_shot(const InferenceTask& task, const RankFn& rank) {
  task.validate();
  ZeroShotResult result;
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < task.items.size(); ++i) {
    std::optional<ItemRanking> r = rank(task.items[i]);
    if (!r) {
      ++result.skipped;
      continue;
    }
    const auto it = std::find(r->order.begin(), r->order.end(), task.items[i].gold_index);
    if (it == r->order.end()) throw ContractViolation("ranking does not contain the gold candidate");
    r->item = i;
    r->gold_rank = static_cast<std::size_t>(it - r->order.begin()) + 1;
    ranks.push_back(r->gold_rank);
    result.rankings.push_back(std::move(*r));
  }
  result.evaluated = ranks.size();
  std::tie(result.hit_at_1, result.mrr) = hit_and_mrr(ranks);
  return result;
}

DecodeQuery make_query(const PaperRecord& record, EntityType type, const ZeroShotSettings& settings) {
  DecodeQuery q;
  q.title = record.title;
  if (settings.use_abstract) q.abstract = record.abstract;
  if (settings.use_prompt) q.prompt = default_prompt(type);
  q.target = type;
  q.order = settings.order;
  q.alpha = settings.alpha;
  q.max_len = settings.max_len;
  return q;
}

ZeroShotResult evaluate_zero_shot(const InferenceTask& task, const Model& model, const Vocabulary& vocab,
                                  const ZeroShotSettings& settings) {
  return evaluate_zero_shot(task, [&](const InferenceItem& item) -> std::optional<ItemRanking> {
    std::vector<std::vector<TokenId>> candidates;
    for (const auto& c : item.candidates) {
      auto ids = vocab.tokenize(c);
      if (ids.empty() || std::find(ids.begin(), ids.end(), kUnkId) != ids.end()) return std::nullopt;
      candidates.push_back(std::move(ids));
    }
    if (vocab.tokenize(item.record.title).empty()) return std::nullopt;
    const auto ranked = rank_candidates(model, vocab, make_query(item.record, task.entity_type, settings), candidates);
    ItemRanking r;
    for (const auto& c : ranked) {
      r.order.push_back(c.candidate_index);
      r.scores.push_back(c.normalized);
    }
    return r;
  });
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) throw ContractViolation("prediction and label counts differ");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0 && predicted[i] == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate_classifier(const Model& model, const std::vector<LabeledSample>& data) {
  std::vector<std::size_t> predicted;
  std::vector<int> labels;
  for (const auto& s : data) {
    const Tensor lp = classify_forward(model, s.sample);
    const auto v = lp.data();
    predicted.push_back(static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()));
    labels.push_back(s.label);
  }
  return accuracy(predicted, labels);
}

double majority_baseline(const std::vector<LabeledSample>& data) {
  if (data.empty()) return 0.0;
  std::map<int, std::size_t> counts;
  for (const auto& s : data) ++counts[s.label];
  std::size_t best = 0;
  for (const auto& [label, n] : counts) best = std::max(best, n);
  return static_cast<double>(best) / static_cast<double>(data.size());
}

std::vector<LabeledSample> make_labeled_samples(const Corpus& records, const Vocabulary& vocab,
                                                const FeatureSet& features, std::size_t max_len,
                                                bool include_abstract, std::uint64_t seed) {
  Rng rng = make_rng(seed, "shuffle");
  std::vector<LabeledSample> out;
  for (const auto& r : records) {
    const std::uint64_t shuffle_seed = rng();
    if (!r.topic_id) continue;
    SampleOptions opts;
    opts.max_len = max_len;
    opts.shuffle_seed = shuffle_seed;
    opts.include_abstract = include_abstract;
    opts.features = features;
    try {
      out.push_back({build_sample(r, vocab, opts), *r.topic_id});
    } catch (const InvalidRecord&) {
    }
  }
  return out;
}

}  // namespace entmlm
