#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "entmlm/corpus.hpp"
#include "entmlm/decoding.hpp"
#include "entmlm/model.hpp"
#include "entmlm/training.hpp"

namespace entmlm {

// ---------------------------------------------------------------------------
// Zero-shot candidate inference
// ---------------------------------------------------------------------------

struct InferenceItem {
  PaperRecord record;
  std::vector<std::string> candidates;
  std::size_t gold_index = 0;
};

struct InferenceTask {
  std::vector<InferenceItem> items;
  EntityType entity_type = EntityType::Fos;

  /// Throws ConfigError when an item has < 2 candidates or a bad gold index.
  void validate() const;
};

struct ZeroShotSettings {
  bool use_prompt = false;
  bool use_abstract = false;
  DecodeOrder order = DecodeOrder::OutOfOrder;
  double alpha = 0.0;
  std::size_t max_len = 128;
};

/// "plain", "+prompt", "+abstract", "+both".
std::string setting_name(const ZeroShotSettings& settings);
ZeroShotSettings parse_setting(const std::string& name);

/// "field of study :", "journal or venue :", "affiliations :".
std::string default_prompt(EntityType type);

struct ItemRanking {
  std::size_t item = 0;
  std::vector<std::size_t> order;  // candidate indices, best first
  std::vector<double> scores;      // normalized score, aligned with `order`
  std::size_t gold_rank = 0;       // 1-based
};

struct ZeroShotResult {
  double hit_at_1 = 0.0;
  double mrr = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // items with a candidate outside the vocabulary
  std::vector<ItemRanking> rankings;
};

/// Hit@1 and MRR from 1-based gold ranks. Empty input gives zeros.
std::pair<double, double> hit_and_mrr(const std::vector<std::size_t>& gold_ranks);

/// Returns candidate indices best first, or nullopt to skip the item.
using RankFn = std::function<std::optional<ItemRanking>(const InferenceItem&)>;

ZeroShotResult evaluate_zero_shot(const InferenceTask& task, const RankFn& rank);
ZeroShotResult evaluate_zero_shot(const InferenceTask& task, const Model& model, const Vocabulary& vocab,
                                  const ZeroShotSettings& settings);

DecodeQuery make_query(const PaperRecord& record, EntityType type, const ZeroShotSettings& settings);

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Fraction of samples whose argmax class equals the label.
double evaluate_classifier(const Model& model, const std::vector<LabeledSample>& data);
double accuracy(const std::vector<std::size_t>& predicted, const std::vector<int>& labels);
/// Share of the most frequent label.
double majority_baseline(const std::vector<LabeledSample>& data);

/// One sample per record with its topic id as the label. Records without a
/// topic or without title tokens are skipped.
std::vector<LabeledSample> make_labeled_samples(const Corpus& records, const Vocabulary& vocab,
                                                const FeatureSet& features, std::size_t max_len,
                                                bool include_abstract, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Author name disambiguation
// ---------------------------------------------------------------------------

using Partition = std::vector<std::vector<std::size_t>>;
using IdPartition = std::vector<std::vector<std::string>>;

struct DisambigBlock {
  std::string name;
  std::vector<PaperRecord> papers;
  IdPartition gold_clusters;

  /// Gold sets must be non-empty, disjoint and cover exactly the papers.
  void validate() const;
};

struct PairwiseScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Sorted clusters of sorted members; clusters ordered by their first member.
Partition canonical(Partition p);

/// Edge iff cosine similarity > threshold; zero vectors are isolated.
Partition cluster_by_threshold(const std::vector<Tensor>& embeddings, double threshold);

/// Both partitions must cover the same elements 0..n-1.
PairwiseScores pairwise_f1(const Partition& predicted, const Partition& gold);
PairwiseScores pairwise_f1(const IdPartition& predicted, const IdPartition& gold);

/// Maps a paper to its embedding, or nullopt when it cannot be embedded.
using Embedder = std::function<std::optional<Tensor>(const PaperRecord&)>;

/// Mean-pooled final hidden states of build_sample(record, features).
Embedder model_embedder(const Model& model, const Vocabulary& vocab, const FeatureSet& features,
                        std::size_t max_len);

struct EmbeddedBlock {
  std::vector<std::string> paper_ids;
  std::vector<Tensor> embeddings;
  std::vector<std::string> skipped;
};

EmbeddedBlock embed_papers(const DisambigBlock& block, const Embedder& embed);

struct BlockScore {
  std::string name;
  PairwiseScores scores;
  IdPartition predicted;
};

struct ClusterResult {
  double threshold = 0.0;
  std::vector<std::pair<double, double>> validation_curve;  // (threshold, macro F1)
  std::vector<BlockScore> blocks;                           // test blocks
  double macro_f1 = 0.0;
};

/// 0.65, 0.70, ..., 0.95.
std::vector<double> default_thresholds();

/// Picks the threshold with the best validation macro F1 (first on ties) and
/// reports test scores at it.
ClusterResult run_disambiguation(const std::vector<DisambigBlock>& validation,
                                 const std::vector<DisambigBlock>& test, const Embedder& embed,
                                 const std::vector<double>& thresholds = default_thresholds());

// ---------------------------------------------------------------------------
// Synthetic tasks and task files
// ---------------------------------------------------------------------------

/// Held-out papers of the first `num_candidates` topics; candidates are each
/// topic's primary entity of `type`, gold is the paper's own topic.
InferenceTask build_inference_task(const GeneratorSpec& spec, EntityType type, std::size_t num_candidates,
                                   std::size_t items_per_topic, std::uint64_t seed);

/// Blocks of `persons` same-named authors, each from a distinct topic with
/// `papers_per_person` papers.
std::vector<DisambigBlock> build_disambiguation_blocks(const GeneratorSpec& spec, std::size_t num_blocks,
                                                       std::size_t persons, std::size_t papers_per_person,
                                                       std::uint64_t seed);

/// Held-out labeled papers, `per_topic` from each topic.
Corpus held_out_papers(const GeneratorSpec& spec, std::size_t per_topic, std::uint64_t seed,
                       const std::string& stream);

void save_inference_task(const InferenceTask& task, const std::filesystem::path& path);
InferenceTask load_inference_task(const std::filesystem::path& path, EntityType type);
void save_blocks(const std::vector<DisambigBlock>& blocks, const std::filesystem::path& path);
std::vector<DisambigBlock> load_blocks(const std::filesystem::path& path);

}  // namespace entmlm
