#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "entmlm/corpus.hpp"
#include "entmlm/errors.hpp"
#include "entmlm/vocabulary.hpp"

using namespace entmlm;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("entmlm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("corpus generation is deterministic and topic-major") {
  const GeneratorSpec spec = make_generator_spec(4, 7, 0.1, 11);
  const Corpus a = generate_corpus(spec);
  const Corpus b = generate_corpus(spec);
  CHECK(a == b);
  REQUIRE(a.size() == 28);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].topic_id.has_value());
    CHECK(*a[i].topic_id == static_cast<int>(i / 7));
    CHECK_FALSE(a[i].title.empty());
    CHECK_FALSE(a[i].authors.empty());
    CHECK_FALSE(a[i].fos.empty());
  }
  std::set<std::string> ids;
  for (const auto& r : a) ids.insert(r.paper_id);
  CHECK(ids.size() == a.size());

  const Corpus c = generate_corpus(make_generator_spec(4, 7, 0.1, 12));
  CHECK(a != c);
}

TEST_CASE("entity names are unique across topics") {
  const GeneratorSpec spec = make_generator_spec(20, 1, 0.1, 3);
  std::map<std::string, std::size_t> owner;
  for (std::size_t t = 0; t < spec.topics.size(); ++t) {
    const auto& p = spec.topics[t];
    for (const auto* pool : {&p.fos, &p.venues, &p.affiliations, &p.authors}) {
      for (const auto& name : *pool) {
        const auto [it, fresh] = owner.emplace(name, t);
        CHECK_MESSAGE((fresh || it->second == t), name);
      }
    }
  }
}

TEST_CASE("noise-free papers only use their own topic's entities") {
  const GeneratorSpec spec = make_generator_spec(5, 20, 0.0, 5);
  for (const auto& r : generate_corpus(spec)) {
    const auto& pools = spec.topics[static_cast<std::size_t>(*r.topic_id)];
    for (const auto& f : r.fos) CHECK(std::count(pools.fos.begin(), pools.fos.end(), f) == 1);
    for (const auto& a : r.authors) CHECK(std::count(pools.authors.begin(), pools.authors.end(), a) == 1);
    if (!r.venue.empty()) CHECK(std::count(pools.venues.begin(), pools.venues.end(), r.venue) == 1);
  }
}

TEST_CASE("spec validation") {
  GeneratorSpec spec = make_generator_spec(2, 2, 0.1, 0);
  spec.noise_rate = 0.5;
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);
  spec = make_generator_spec(2, 2, 0.1, 0);
  spec.title_length = {5, 3};
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);
  spec = make_generator_spec(2, 2, 0.1, 0);
  spec.topics[1].fos.clear();
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);
}

TEST_CASE("records round-trip through JSON lines") {
  const auto dir = temp_dir("corpus_io");
  const Corpus corpus = generate_corpus(make_generator_spec(3, 4, 0.1, 2));
  save_corpus(corpus, dir / "c.jsonl");
  CHECK(load_corpus(dir / "c.jsonl") == corpus);

  PaperRecord r;
  r.paper_id = "x";
  r.title = "a \"quoted\" title";
  CHECK(record_from_json(record_to_json(r)) == r);

  std::ofstream(dir / "bad.jsonl") << record_to_json(r) << "\n{not json\n";
  try {
    load_corpus(dir / "bad.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(record_from_json(R"({"paper_id": "p"})", 4), ParseError);
}

TEST_CASE("split_words lowercases and isolates punctuation") {
  CHECK(split_words("Deep Learning: a Survey") ==
        std::vector<std::string>{"deep", "learning", ":", "a", "survey"});
  CHECK(split_words("  ").empty());
  CHECK(split_words("x,y") == std::vector<std::string>{"x", ",", "y"});
}

TEST_CASE("vocabulary counts match a recount") {
  const Corpus corpus = generate_corpus(make_generator_spec(3, 10, 0.1, 9));
  const Vocabulary vocab = Vocabulary::build(corpus, 2);

  std::map<std::string, std::size_t> counts;
  for (const auto& r : corpus) {
    std::vector<std::string> texts{r.title, r.abstract, r.venue};
    texts.insert(texts.end(), r.authors.begin(), r.authors.end());
    texts.insert(texts.end(), r.fos.begin(), r.fos.end());
    texts.insert(texts.end(), r.affiliations.begin(), r.affiliations.end());
    for (const auto& t : texts)
      for (const auto& w : split_words(t)) ++counts[w];
  }
  std::vector<std::pair<std::size_t, std::string>> expected;
  for (const auto& [w, c] : counts)
    if (c >= 2) expected.emplace_back(c, w);
  std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });

  REQUIRE(vocab.size() == expected.size() + kNumSpecials);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(vocab.token(static_cast<TokenId>(i + kNumSpecials)) == expected[i].second);
  }
  for (TokenId id = 0; id < kNumSpecials; ++id) CHECK(vocab.token(id) == special_tokens()[id]);
}

TEST_CASE("tokenize maps unknown words to UNK and never emits other specials") {
  const Vocabulary vocab = Vocabulary::from_tokens({"graph", "neural", ":"});
  CHECK(vocab.tokenize("Neural graph: zzz") ==
        std::vector<TokenId>{vocab.id("neural"), vocab.id("graph"), vocab.id(":"), kUnkId});
  CHECK(vocab.tokenize("[MASK]") == std::vector<TokenId>{kUnkId, kUnkId, kUnkId});
  CHECK_FALSE(vocab.contains("zzz"));
}

TEST_CASE("vocabulary save and load round-trip") {
  const auto dir = temp_dir("vocab_io");
  const Vocabulary vocab = Vocabulary::from_tokens({"b", "a", "c"});
  vocab.save(dir / "v.txt");
  CHECK(Vocabulary::load(dir / "v.txt") == vocab);
  std::ofstream(dir / "dup.txt") << "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\na\n";
  CHECK_THROWS(Vocabulary::load(dir / "dup.txt"));
}

TEST_CASE("atomic writes leave no temporary files behind") {
  const auto dir = temp_dir("atomic");
  write_file_atomic(dir / "f.txt", "one");
  write_file_atomic(dir / "f.txt", "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  std::ifstream in(dir / "f.txt");
  std::string s;
  in >> s;
  CHECK(s == "two");
}
