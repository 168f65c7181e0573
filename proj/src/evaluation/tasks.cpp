#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "entmlm/errors.hpp"
#include "entmlm/evaluation.hpp"

namespace entmlm {

namespace {

using nlohmann::json;

const std::string& primary_entity(const TopicPools& pools, EntityType type) {
  switch (type) {
    case EntityType::Fos: return pools.fos.at(0);
    case EntityType::Venue: return pools.venues.at(0);
    case EntityType::Affiliation: return pools.affiliations.at(0);
    case EntityType::Author: return pools.authors.at(0);
    case EntityType::Text: break;
  }
  throw ConfigError("text is not a candidate entity type");
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), number);
    }
    try {
      fn(j, number);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), number);
    }
  }
}

}  // namespace

Corpus held_out_papers(const GeneratorSpec& spec, std::size_t per_topic, std::uint64_t seed,
                       const std::string& stream) {
  validate_spec(spec);
  Rng rng = make_rng(seed, stream);
  Corpus out;
  for (std::size_t t = 0; t < spec.topics.size(); ++t) {
    for (std::size_t i = 0; i < per_topic; ++i) {
      out.push_back(generate_paper(spec, t, rng, stream + "-" + std::to_string(out.size())));
    }
  }
  return out;
}

InferenceTask build_inference_task(const GeneratorSpec& spec, EntityType type, std::size_t num_candidates,
                                   std::size_t items_per_topic, std::uint64_t seed) {
  validate_spec(spec);
  if (num_candidates < 2 || num_candidates > spec.topics.size()) {
    throw ConfigError("candidate count must lie in [2, number of topics]");
  }
  InferenceTask task;
  task.entity_type = type;
  std::vector<std::string> candidates;
  for (std::size_t t = 0; t < num_candidates; ++t) candidates.push_back(primary_entity(spec.topics[t], type));

  Rng rng = make_rng(seed, std::string("inference-") + entity_type_name(type));
  for (std::size_t t = 0; t < num_candidates; ++t) {
    for (std::size_t i = 0; i < items_per_topic; ++i) {
      InferenceItem item;
      item.record = generate_paper(spec, t, rng, "q" + std::to_string(task.items.size()));
      item.candidates = candidates;
      item.gold_index = t;
      task.items.push_back(std::move(item));
    }
  }
  return task;
}

std::vector<DisambigBlock> build_disambiguation_blocks(const GeneratorSpec& spec, std::size_t num_blocks,
                                                       std::size_t persons, std::size_t papers_per_person,
                                                       std::uint64_t seed) {
  validate_spec(spec);
  if (persons < 1 || persons > spec.topics.size()) throw ConfigError("persons per block must lie in [1, topics]");
  Rng rng = make_rng(seed, "disambiguation");
  std::vector<DisambigBlock> blocks;
  for (std::size_t b = 0; b < num_blocks; ++b) {
    std::vector<std::size_t> topics(spec.topics.size());
    std::iota(topics.begin(), topics.end(), std::size_t{0});
    std::shuffle(topics.begin(), topics.end(), rng);
    DisambigBlock block;
    const auto& name_pool = spec.topics[topics[0]].authors;
    block.name = name_pool[uniform_index(rng, 0, name_pool.size() - 1)];
    for (std::size_t k = 0; k < persons; ++k) {
      std::vector<std::string> cluster;
      for (std::size_t i = 0; i < papers_per_person; ++i) {
        const std::string id = "b" + std::to_string(b) + "-" + std::to_string(k) + "-" + std::to_string(i);
        PaperRecord paper = generate_paper(spec, topics[k], rng, id);
        std::erase(paper.authors, block.name);
        paper.authors.insert(paper.authors.begin(), block.name);
        block.papers.push_back(std::move(paper));
        cluster.push_back(id);
      }
      block.gold_clusters.push_back(std::move(cluster));
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

void save_inference_task(const InferenceTask& task, const std::filesystem::path& path) {
  std::string out;
  for (const auto& item : task.items) {
    json j{{"record", json::parse(record_to_json(item.record))},
           {"candidates", item.candidates},
           {"gold_index", item.gold_index}};
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

InferenceTask load_inference_task(const std::filesystem::path& path, EntityType type) {
  InferenceTask task;
  task.entity_type = type;
  for_each_line(path, [&](const json& j, std::size_t line) {
    InferenceItem item;
    item.record = record_from_json(j.at("record").dump(), line);
    item.candidates = j.at("candidates").get<std::vector<std::string>>();
    item.gold_index = j.at("gold_index").get<std::size_t>();
    if (item.candidates.size() < 2 || item.gold_index >= item.candidates.size()) {
      throw ParseError("gold_index outside the candidate list or fewer than 2 candidates", line);
    }
    task.items.push_back(std::move(item));
  });
  return task;
}

void save_blocks(const std::vector<DisambigBlock>& blocks, const std::filesystem::path& path) {
  std::string out;
  for (const auto& b : blocks) {
    json papers = json::array();
    for (const auto& p : b.papers) papers.push_back(json::parse(record_to_json(p)));
    out += json{{"block", b.name}, {"papers", papers}, {"gold_clusters", b.gold_clusters}}.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<DisambigBlock> load_blocks(const std::filesystem::path& path) {
  std::vector<DisambigBlock> blocks;
  for_each_line(path, [&](const json& j, std::size_t line) {
    DisambigBlock b;
    b.name = j.at("block").get<std::string>();
    for (const auto& p : j.at("papers")) b.papers.push_back(record_from_json(p.dump(), line));
    b.gold_clusters = j.at("gold_clusters").get<IdPartition>();
    try {
      b.validate();
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line);
    }
    blocks.push_back(std::move(b));
  });
  return blocks;
}

}  // namespace entmlm
