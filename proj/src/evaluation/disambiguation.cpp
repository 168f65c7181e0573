#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include "entmlm/errors.hpp"
#include "entmlm/evaluation.hpp"

namespace entmlm {

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

double pairs(std::size_t n) { return static_cast<double>(n) * static_cast<double>(n == 0 ? 0 : n - 1) / 2.0; }

// Cluster label per element; throws unless the partition covers 0..n-1 exactly once.
std::vector<std::size_t> labels_of(const Partition& p, std::size_t n) {
  std::vector<std::size_t> label(n, n);
  for (std::size_t c = 0; c < p.size(); ++c) {
    for (std::size_t x : p[c]) {
      if (x >= n || label[x] != n) throw ContractViolation("partitions cover different elements");
      label[x] = c;
    }
  }
  return label;
}

std::size_t element_count(const Partition& p) {
  std::size_t n = 0;
  for (const auto& c : p) n += c.size();
  return n;
}

struct EvaluatedBlock {
  const DisambigBlock* block;
  EmbeddedBlock embedded;
  Partition gold;
};

EvaluatedBlock prepare(const DisambigBlock& block, const Embedder& embed) {
  block.validate();
  EvaluatedBlock e{&block, embed_papers(block, embed), {}};
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < e.embedded.paper_ids.size(); ++i) index[e.embedded.paper_ids[i]] = i;
  for (const auto& cluster : block.gold_clusters) {
    std::vector<std::size_t> members;
    for (const auto& id : cluster) {
      if (auto it = index.find(id); it != index.end()) members.push_back(it->second);
    }
    if (!members.empty()) e.gold.push_back(std::move(members));
  }
  return e;
}

PairwiseScores score_block(const EvaluatedBlock& e, double threshold, Partition* predicted) {
  Partition p = cluster_by_threshold(e.embedded.embeddings, threshold);
  PairwiseScores s = pairwise_f1(p, e.gold);
  if (predicted != nullptr) *predicted = std::move(p);
  return s;
}

}  // namespace

void DisambigBlock::validate() const {
  std::set<std::string> ids;
  for (const auto& p : papers) {
    if (!ids.insert(p.paper_id).second) throw ConfigError("block " + name + ": duplicate paper id " + p.paper_id);
  }
  std::set<std::string> covered;
  for (const auto& cluster : gold_clusters) {
    if (cluster.empty()) throw ConfigError("block " + name + ": empty gold cluster");
    for (const auto& id : cluster) {
      if (!ids.contains(id)) throw ConfigError("block " + name + ": gold cluster names unknown paper " + id);
      if (!covered.insert(id).second) throw ConfigError("block " + name + ": paper " + id + " in two gold clusters");
    }
  }
  if (covered.size() != ids.size()) throw ConfigError("block " + name + ": gold clusters do not cover every paper");
}

Partition canonical(Partition p) {
  for (auto& c : p) std::sort(c.begin(), c.end());
  std::erase_if(p, [](const auto& c) { return c.empty(); });
  std::sort(p.begin(), p.end());
  return p;
}

Partition cluster_by_threshold(const std::vector<Tensor>& embeddings, double threshold) {
  if (embeddings.empty()) throw ContractViolation("cannot cluster an empty set");
  if (!(threshold >= -1.0 && threshold <= 1.0)) throw ContractViolation("threshold must lie in [-1, 1]");
  const std::size_t n = embeddings.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (embeddings[i].size() != embeddings[0].size()) throw ContractViolation("embedding dimensions differ");
    double s = 0.0;
    for (double v : embeddings[i].data()) s += v * v;
    norms[i] = std::sqrt(s);
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    if (norms[i] == 0.0) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (norms[j] == 0.0) continue;
      double dot = 0.0;
      const auto a = embeddings[i].data();
      const auto b = embeddings[j].data();
      for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
      const double cosine = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      if (cosine > threshold) parent[find_root(parent, i)] = find_root(parent, j);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find_root(parent, i)].push_back(i);
  Partition out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return canonical(std::move(out));
}

PairwiseScores pairwise_f1(const Partition& predicted, const Partition& gold) {
  const std::size_t n = element_count(gold);
  if (element_count(predicted) != n) throw ContractViolation("partitions cover different elements");
  const auto pred_label = labels_of(predicted, n);
  const auto gold_label = labels_of(gold, n);

  double pred_pairs = 0.0, gold_pairs = 0.0, common = 0.0;
  for (const auto& c : predicted) pred_pairs += pairs(c.size());
  for (const auto& c : gold) gold_pairs += pairs(c.size());
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> overlap;
  for (std::size_t x = 0; x < n; ++x) ++overlap[{pred_label[x], gold_label[x]}];
  for (const auto& [key, count] : overlap) common += pairs(count);

  PairwiseScores s;
  s.precision = pred_pairs > 0.0 ? common / pred_pairs : 0.0;
  s.recall = gold_pairs > 0.0 ? common / gold_pairs : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

PairwiseScores pairwise_f1(const IdPartition& predicted, const IdPartition& gold) {
  std::map<std::string, std::size_t> index;
  for (const auto& c : gold) {
    for (const auto& id : c) index.emplace(id, index.size());
  }
  const auto convert = [&](const IdPartition& p) {
    Partition out;
    for (const auto& c : p) {
      std::vector<std::size_t> members;
      for (const auto& id : c) {
        const auto it = index.find(id);
        if (it == index.end()) throw ContractViolation("partitions cover different elements");
        members.push_back(it->second);
      }
      out.push_back(std::move(members));
    }
    return out;
  };
  return pairwise_f1(convert(predicted), convert(gold));
}

Embedder model_embedder(const Model& model, const Vocabulary& vocab, const FeatureSet& features,
                        std::size_t max_len) {
  return [&model, &vocab, features, max_len](const PaperRecord& record) -> std::optional<Tensor> {
    SampleOptions opts;
    opts.max_len = max_len;
    opts.features = features;
    // Entity order must not depend on call order, so it is seeded by the record.
    opts.shuffle_seed = derive_seed(0, record.paper_id);
    InputSample sample;
    try {
      sample = build_sample(record, vocab, opts);
    } catch (const InvalidRecord&) {
      return std::nullopt;
    }
    return pooled_embedding(encoder_forward(model, sample, false).hidden, sample.attention_mask);
  };
}

EmbeddedBlock embed_papers(const DisambigBlock& block, const Embedder& embed) {
  EmbeddedBlock out;
  for (const auto& paper : block.papers) {
    std::optional<Tensor> e = embed(paper);
    if (!e) {
      std::cerr << "warning: block " << block.name << ": paper " << paper.paper_id
                << " cannot be embedded and is left out\n";
      out.skipped.push_back(paper.paper_id);
      continue;
    }
    out.paper_ids.push_back(paper.paper_id);
    out.embeddings.push_back(std::move(*e));
  }
  return out;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 6; ++i) t.push_back(0.65 + 0.05 * i);
  return t;
}

ClusterResult run_disambiguation(const std::vector<DisambigBlock>& validation,
                                 const std::vector<DisambigBlock>& test, const Embedder& embed,
                                 const std::vector<double>& thresholds) {
  if (validation.empty() || test.empty()) throw ConfigError("need at least one validation and one test block");
  if (thresholds.empty()) throw ConfigError("no thresholds to search");
  const auto prepare_all = [&](const std::vector<DisambigBlock>& blocks) {
    std::vector<EvaluatedBlock> out;
    for (const auto& b : blocks) {
      EvaluatedBlock e = prepare(b, embed);
      if (!e.embedded.embeddings.empty()) out.push_back(std::move(e));
    }
    return out;
  };
  const auto valid = prepare_all(validation);
  const auto tested = prepare_all(test);
  if (valid.empty() || tested.empty()) throw ConfigError("no block has an embeddable paper");

  ClusterResult result;
  double best = -1.0;
  for (double t : thresholds) {
    double sum = 0.0;
    for (const auto& e : valid) sum += score_block(e, t, nullptr).f1;
    const double macro = sum / static_cast<double>(valid.size());
    result.validation_curve.emplace_back(t, macro);
    if (macro > best) {
      best = macro;
      result.threshold = t;
    }
  }

  double sum = 0.0;
  for (const auto& e : tested) {
    BlockScore bs;
    bs.name = e.block->name;
    Partition p;
    bs.scores = score_block(e, result.threshold, &p);
    for (const auto& c : p) {
      std::vector<std::string> ids;
      for (std::size_t i : c) ids.push_back(e.embedded.paper_ids[i]);
      bs.predicted.push_back(std::move(ids));
    }
    sum += bs.scores.f1;
    result.blocks.push_back(std::move(bs));
  }
  result.macro_f1 = sum / static_cast<double>(tested.size());
  return result;
}

}  // namespace entmlm
