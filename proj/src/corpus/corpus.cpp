#include "entmlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "entmlm/errors.hpp"

namespace entmlm {

namespace {

using nlohmann::json;

const std::vector<std::string>& default_generic_words() {
  static const std::vector<std::string> words = {
      "a",        "the",     "of",     "on",      "for",   "study",  "analysis", "method",
      "approach", "towards", "novel",  "using",   "based", "new",    "results",  "model",
      "data",     "field",   "journal", "or",     "venue", "affiliations", "framework", "via"};
  return words;
}

class WordFactory {
 public:
  explicit WordFactory(Rng& rng) : rng_(rng) {
    for (const auto& w : default_generic_words()) used_.insert(w);
  }

  std::string fresh(std::size_t min_syllables, std::size_t max_syllables) {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    for (;;) {
      std::string w;
      const std::size_t n = uniform_index(rng_, min_syllables, max_syllables);
      for (std::size_t i = 0; i < n; ++i) {
        w += consonants[uniform_index(rng_, 0, consonants.size() - 1)];
        w += vowels[uniform_index(rng_, 0, vowels.size() - 1)];
      }
      if (used_.insert(w).second) return w;
    }
  }

  std::string phrase(std::size_t words) {
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
      if (i > 0) out += ' ';
      out += fresh(2, 3);
    }
    return out;
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

template <typename T>
const T& pick(const std::vector<T>& pool, Rng& rng) {
  return pool[uniform_index(rng, 0, pool.size() - 1)];
}

// The topic an entity is drawn from: own topic with probability 1 - noise,
// otherwise a uniformly chosen other topic.
std::size_t entity_topic(const GeneratorSpec& spec, std::size_t topic, Rng& rng) {
  if (spec.topics.size() < 2 || uniform01(rng) >= spec.noise_rate) return topic;
  std::size_t other = uniform_index(rng, 0, spec.topics.size() - 2);
  return other >= topic ? other + 1 : other;
}

std::vector<std::string> pick_distinct(const std::vector<std::string>& pool, std::size_t count,
                                       Rng& rng) {
  std::vector<std::string> shuffled = pool;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  shuffled.resize(std::min(count, shuffled.size()));
  return shuffled;
}

std::string draw_text(const GeneratorSpec& spec, const std::vector<std::string>& words,
                      std::size_t length, Rng& rng) {
  std::string out;
  for (std::size_t i = 0; i < length; ++i) {
    const bool generic = uniform01(rng) < spec.generic_rate;
    if (!out.empty()) out += ' ';
    out += generic ? pick(spec.generic_words, rng) : pick(words, rng);
  }
  return out;
}

void check_range(const CountRange& r, const char* name) {
  if (r.lo > r.hi) throw ConfigError(std::string(name) + ": lower bound exceeds upper bound");
}

std::vector<std::string> string_list(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(std::string("missing key '") + key + "'", line);
  const json& v = j.at(key);
  if (!v.is_array()) throw ParseError(std::string("key '") + key + "' must be an array", line);
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) throw ParseError(std::string("key '") + key + "' must hold strings", line);
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string string_field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(std::string("missing key '") + key + "'", line);
  if (!j.at(key).is_string()) throw ParseError(std::string("key '") + key + "' must be a string", line);
  return j.at(key).get<std::string>();
}

}  // namespace

GeneratorSpec make_generator_spec(std::size_t num_topics, std::size_t papers_per_topic,
                                  double noise_rate, std::uint64_t seed, const PoolSizes& sizes) {
  if (num_topics == 0) throw ConfigError("num_topics must be >= 1");
  GeneratorSpec spec;
  spec.papers_per_topic = papers_per_topic;
  spec.noise_rate = noise_rate;
  spec.seed = seed;
  spec.generic_words = default_generic_words();

  Rng rng = make_rng(seed, "pools");
  WordFactory words(rng);
  std::vector<std::string> shared;
  for (std::size_t i = 0; i < std::max<std::size_t>(sizes.shared_words, 1); ++i) {
    shared.push_back(words.fresh(2, 3));
  }
  std::vector<std::string> first_names;
  for (std::size_t i = 0; i < 40; ++i) first_names.push_back(words.fresh(2, 2));

  // "#" marks where the topic-specific name goes: half the time one of the
  // topic's fields ("journal of <field>"), otherwise a fresh phrase.
  static const std::vector<std::string> venue_templates = {
      "journal of #", "transactions on #", "international journal of #", "# letters",
      "proceedings of the international conference on #", "# review", "# international conference proceedings",
      "annals of #"};
  static const std::vector<std::string> affiliation_templates = {
      "# university", "institute of #", "# research center", "department of # @ university",
      "# institute of technology"};
  const auto fill = [&](const std::string& pattern, const std::vector<std::string>& fields) {
    std::string out;
    for (char ch : pattern) {
      if (ch == '#') {
        out += uniform01(rng) < 0.5 ? pick(fields, rng) : words.phrase(uniform_index(rng, 1, 2));
      } else if (ch == '@') {
        out += words.fresh(2, 3);
      } else {
        out += ch;
      }
    }
    return out;
  };

  for (std::size_t t = 0; t < num_topics; ++t) {
    TopicPools pools;
    pools.title_words = pick_distinct(shared, sizes.title_words, rng);
    pools.abstract_words = pick_distinct(shared, sizes.abstract_words, rng);
    for (std::size_t i = 0; i < sizes.fos; ++i) {
      // Most top-level fields are one word; every fifth is "<word> science".
      // Sub-field lengths cycle 1, 2, 3 within a topic.
      if (i == 0) {
        pools.fos.push_back(t % 5 == 4 ? words.fresh(2, 3) + " science" : words.fresh(2, 3));
      } else {
        pools.fos.push_back(words.phrase(1 + (i - 1) % 3));
      }
    }
    const auto add_distinct = [&](std::vector<std::string>& pool, const std::vector<std::string>& templates,
                                  std::size_t n) {
      while (pool.size() < n) {
        std::string name = fill(pick(templates, rng), pools.fos);
        if (std::find(pool.begin(), pool.end(), name) == pool.end()) pool.push_back(std::move(name));
      }
    };
    add_distinct(pools.venues, venue_templates, sizes.venues);
    add_distinct(pools.affiliations, affiliation_templates, sizes.affiliations);
    for (std::size_t i = 0; i < sizes.authors; ++i) {
      pools.authors.push_back(pick(first_names, rng) + " " + words.fresh(2, 3));
    }
    spec.topics.push_back(std::move(pools));
  }
  return spec;
}

void validate_spec(const GeneratorSpec& spec) {
  if (spec.topics.empty()) throw ConfigError("generator spec has no topics");
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate < 0.5)) {
    throw ConfigError("noise rate must lie in [0, 0.5)");
  }
  if (spec.generic_words.empty()) throw ConfigError("generic word pool is empty");
  if (spec.generic_rate < 0.0 || spec.generic_rate >= 1.0) {
    throw ConfigError("generic_rate must lie in [0, 1)");
  }
  check_range(spec.title_length, "title_length");
  check_range(spec.abstract_length, "abstract_length");
  check_range(spec.authors_per_paper, "authors_per_paper");
  check_range(spec.extra_fos, "extra_fos");
  check_range(spec.affiliations_per_paper, "affiliations_per_paper");
  for (double rate : {spec.fos_mention_rate, spec.missing_venue_rate, spec.missing_affiliation_rate, spec.empty_abstract_rate}) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("missing-entity rates must lie in [0, 1]");
  }
  if (spec.title_length.lo == 0) throw ConfigError("titles must have at least one word");
  for (std::size_t t = 0; t < spec.topics.size(); ++t) {
    const TopicPools& p = spec.topics[t];
    const std::string where = "topic " + std::to_string(t) + ": ";
    if (p.title_words.empty()) throw ConfigError(where + "empty title word pool");
    if (p.abstract_words.empty()) throw ConfigError(where + "empty abstract word pool");
    if (p.fos.empty()) throw ConfigError(where + "empty FOS pool");
    if (p.venues.empty()) throw ConfigError(where + "empty venue pool");
    if (p.affiliations.empty()) throw ConfigError(where + "empty affiliation pool");
    if (p.authors.empty()) throw ConfigError(where + "empty author pool");
  }
}

PaperRecord generate_paper(const GeneratorSpec& spec, std::size_t topic, Rng& rng,
                           std::string paper_id) {
  const TopicPools& pools = spec.topics.at(topic);
  PaperRecord r;
  r.paper_id = std::move(paper_id);
  r.topic_id = static_cast<int>(topic);

  std::string title = draw_text(spec, pools.title_words,
                                uniform_index(rng, spec.title_length.lo, spec.title_length.hi), rng);
  if (uniform01(rng) < spec.title_colon_rate) {
    title = draw_text(spec, pools.title_words, 2, rng) + ": " + title;
  }
  r.title = capitalize(title);

  r.fos.push_back(spec.topics[entity_topic(spec, topic, rng)].fos.front());
  if (uniform01(rng) >= spec.empty_abstract_rate) {
    std::vector<std::string> abstract_pool = pools.abstract_words;
    abstract_pool.insert(abstract_pool.end(), pools.title_words.begin(), pools.title_words.end());
    const std::size_t len = uniform_index(rng, spec.abstract_length.lo, spec.abstract_length.hi);
    std::string body = draw_text(spec, abstract_pool, len, rng);
    if (uniform01(rng) < spec.fos_mention_rate) {
      std::vector<std::size_t> cuts{0};
      for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] == ' ') cuts.push_back(i + 1);
      }
      const std::size_t at = cuts[uniform_index(rng, 0, cuts.size() - 1)];
      body.insert(at, r.fos.front() + (body.empty() ? "" : " "));
    }
    if (!body.empty()) r.abstract = capitalize(body) + ".";
  }

  const std::size_t n_authors = uniform_index(rng, spec.authors_per_paper.lo, spec.authors_per_paper.hi);
  for (std::size_t i = 0; i < n_authors; ++i) {
    std::string name = pick(spec.topics[entity_topic(spec, topic, rng)].authors, rng);
    if (std::find(r.authors.begin(), r.authors.end(), name) == r.authors.end()) r.authors.push_back(std::move(name));
  }

  const std::size_t extra = uniform_index(rng, spec.extra_fos.lo, spec.extra_fos.hi);
  for (std::size_t i = 0; i < extra; ++i) {
    const TopicPools& src = spec.topics[entity_topic(spec, topic, rng)];
    if (src.fos.size() < 2) continue;
    std::string name = src.fos[uniform_index(rng, 1, src.fos.size() - 1)];
    if (std::find(r.fos.begin(), r.fos.end(), name) == r.fos.end()) r.fos.push_back(std::move(name));
  }

  const std::string& venue = pick(spec.topics[entity_topic(spec, topic, rng)].venues, rng);
  if (uniform01(rng) >= spec.missing_venue_rate) r.venue = venue;

  const std::size_t n_aff = uniform01(rng) < spec.missing_affiliation_rate
                                ? 0
                                : uniform_index(rng, spec.affiliations_per_paper.lo, spec.affiliations_per_paper.hi);
  for (std::size_t i = 0; i < n_aff; ++i) {
    std::string name = pick(spec.topics[entity_topic(spec, topic, rng)].affiliations, rng);
    if (std::find(r.affiliations.begin(), r.affiliations.end(), name) == r.affiliations.end()) {
      r.affiliations.push_back(std::move(name));
    }
  }
  return r;
}

Corpus generate_corpus(const GeneratorSpec& spec) {
  validate_spec(spec);
  Rng rng = make_rng(spec.seed, "corpus");
  Corpus corpus;
  corpus.reserve(spec.topics.size() * spec.papers_per_topic);
  for (std::size_t t = 0; t < spec.topics.size(); ++t) {
    for (std::size_t i = 0; i < spec.papers_per_topic; ++i) {
      corpus.push_back(generate_paper(spec, t, rng, "p" + std::to_string(corpus.size())));
    }
  }
  return corpus;
}

std::string record_to_json(const PaperRecord& record) {
  json j;
  j["paper_id"] = record.paper_id;
  j["title"] = record.title;
  j["abstract"] = record.abstract;
  j["authors"] = record.authors;
  j["fos"] = record.fos;
  j["venue"] = record.venue;
  j["affiliations"] = record.affiliations;
  if (record.topic_id) j["topic_id"] = *record.topic_id;
  return j.dump();
}

PaperRecord record_from_json(const std::string& line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_number);
  }
  if (!j.is_object()) throw ParseError("record must be a JSON object", line_number);
  PaperRecord r;
  r.paper_id = string_field(j, "paper_id", line_number);
  r.title = string_field(j, "title", line_number);
  r.abstract = string_field(j, "abstract", line_number);
  r.authors = string_list(j, "authors", line_number);
  r.fos = string_list(j, "fos", line_number);
  r.venue = string_field(j, "venue", line_number);
  r.affiliations = string_list(j, "affiliations", line_number);
  if (j.contains("topic_id") && !j.at("topic_id").is_null()) {
    if (!j.at("topic_id").is_number_integer()) {
      throw ParseError("key 'topic_id' must be an integer", line_number);
    }
    r.topic_id = j.at("topic_id").get<int>();
  }
  return r;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::string content;
  for (const auto& r : corpus) {
    content += record_to_json(r);
    content += '\n';
  }
  write_file_atomic(path, content);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    corpus.push_back(record_from_json(line, line_number));
  }
  return corpus;
}

}  // namespace entmlm
