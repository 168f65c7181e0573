#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "entmlm/rng.hpp"

namespace entmlm {

/// One paper and its ego-network entities.
struct PaperRecord {
  std::string paper_id;
  std::string title;
  std::string abstract;
  std::vector<std::string> authors;
  std::vector<std::string> fos;
  std::string venue;
  std::vector<std::string> affiliations;
  std::optional<int> topic_id;  // generator ground truth

  friend bool operator==(const PaperRecord&, const PaperRecord&) = default;
};

using Corpus = std::vector<PaperRecord>;

/// Word and entity pools owned by one synthetic topic. `fos[0]` is the
/// topic's top-level field of study.
struct TopicPools {
  std::vector<std::string> title_words;
  std::vector<std::string> abstract_words;
  std::vector<std::string> fos;
  std::vector<std::string> venues;
  std::vector<std::string> affiliations;
  std::vector<std::string> authors;
};

struct CountRange {
  std::size_t lo = 1;
  std::size_t hi = 1;
};

struct GeneratorSpec {
  std::vector<TopicPools> topics;
  std::vector<std::string> generic_words;  // topic-neutral filler shared by all topics
  std::size_t papers_per_topic = 100;
  double noise_rate = 0.1;  // probability an author/FOS/venue/affiliation comes from another topic
  std::uint64_t seed = 0;

  CountRange title_length{4, 7};
  CountRange abstract_length{12, 20};
  double generic_rate = 0.3;
  double title_colon_rate = 0.2;
  double empty_abstract_rate = 0.0;
  CountRange authors_per_paper{1, 3};
  CountRange extra_fos{1, 2};
  CountRange affiliations_per_paper{1, 2};
  double fos_mention_rate = 0.3;  // abstracts that name the paper's primary field
  double missing_venue_rate = 0.3;        // papers published without a venue
  double missing_affiliation_rate = 0.3;  // papers without affiliations
};

/// Pool sizes used by make_generator_spec.
struct PoolSizes {
  std::size_t shared_words = 160;   // title/abstract vocabulary shared across topics
  std::size_t title_words = 14;     // per topic, drawn from the shared pool
  std::size_t abstract_words = 24;  // per topic, drawn from the shared pool
  std::size_t fos = 4;
  std::size_t venues = 3;
  std::size_t affiliations = 3;
  std::size_t authors = 12;
};

/// Builds a spec whose pools are synthesized deterministically from `seed`.
/// Entity names are unique across topics; text words overlap between topics.
GeneratorSpec make_generator_spec(std::size_t num_topics, std::size_t papers_per_topic,
                                  double noise_rate, std::uint64_t seed,
                                  const PoolSizes& sizes = {});

/// Throws ConfigError on empty pools, noise >= 0.5 or inverted ranges.
void validate_spec(const GeneratorSpec& spec);

/// Draws one paper of `topic`. Exposed so task builders can sample held-out papers.
PaperRecord generate_paper(const GeneratorSpec& spec, std::size_t topic, Rng& rng,
                           std::string paper_id);

/// Deterministic in `spec` (seed included). Papers are ordered topic-major.
Corpus generate_corpus(const GeneratorSpec& spec);

std::string record_to_json(const PaperRecord& record);
/// Throws ParseError (with `line_number`) on malformed input.
PaperRecord record_from_json(const std::string& line, std::size_t line_number = 1);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace entmlm
