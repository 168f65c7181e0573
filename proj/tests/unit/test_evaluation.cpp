#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "entmlm/errors.hpp"
#include "entmlm/evaluation.hpp"

using namespace entmlm;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("entmlm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Tensor vec(std::initializer_list<double> v) { return Tensor({v.size()}, std::vector<double>(v)); }

PaperRecord paper(const std::string& id) {
  PaperRecord p;
  p.paper_id = id;
  p.title = "t";
  return p;
}

}  // namespace

TEST_CASE("hit@1 and MRR from gold ranks") {
  const auto [hit, mrr] = hit_and_mrr({1, 2, 4, 1});
  CHECK(hit == doctest::Approx(0.5));
  CHECK(mrr == doctest::Approx((1 + 0.5 + 0.25 + 1) / 4));
  const auto [h0, m0] = hit_and_mrr({});
  CHECK(h0 == 0.0);
  CHECK(m0 == 0.0);
}

TEST_CASE("zero-shot evaluation with a stub ranker") {
  InferenceTask task;
  for (std::size_t i = 0; i < 4; ++i) {
    InferenceItem it;
    it.record = paper("p" + std::to_string(i));
    it.candidates = {"x", "y", "z"};
    it.gold_index = i % 3;
    task.items.push_back(it);
  }
  // Always ranks 0, 1, 2 and skips the last item.
  RankFn rank = [&](const InferenceItem& item) -> std::optional<ItemRanking> {
    if (item.record.paper_id == "p3") return std::nullopt;
    ItemRanking r;
    r.order = {0, 1, 2};
    r.scores = {-1, -2, -3};
    return r;
  };
  const ZeroShotResult res = evaluate_zero_shot(task, rank);
  CHECK(res.evaluated == 3);
  CHECK(res.skipped == 1);
  CHECK(res.hit_at_1 == doctest::Approx(1.0 / 3));
  CHECK(res.mrr == doctest::Approx((1 + 0.5 + 1.0 / 3) / 3));
  REQUIRE(res.rankings.size() == 3);
  CHECK(res.rankings[2].gold_rank == 3);

  task.items[0].gold_index = 7;
  CHECK_THROWS_AS(task.validate(), ConfigError);
}

TEST_CASE("setting names") {
  for (const std::string name : {"plain", "+prompt", "+abstract", "+both"}) {
    CHECK(setting_name(parse_setting(name)) == name);
  }
  CHECK(parse_setting("+both").use_prompt);
  CHECK_THROWS_AS(parse_setting("fancy"), ConfigError);
  CHECK(default_prompt(EntityType::Fos) == "field of study :");
}

TEST_CASE("accuracy and majority baseline") {
  CHECK(accuracy({0, 1, 1, 2}, {0, 1, 2, 2}) == doctest::Approx(0.75));
  std::vector<LabeledSample> d(5);
  d[0].label = d[1].label = d[2].label = 1;
  CHECK(majority_baseline(d) == doctest::Approx(0.6));
}

TEST_CASE("canonical ordering") {
  const Partition p = canonical({{4, 2}, {3}, {0, 1}});
  CHECK(p == Partition{{0, 1}, {2, 4}, {3}});
}

TEST_CASE("pairwise F1 on a worked example") {
  // gold {0,1,2}{3,4}; predicted {0,1}{2,3,4}
  // gold pairs: 3 + 1 = 4; predicted pairs: 1 + 3 = 4; shared: {0,1},{3,4} = 2
  const PairwiseScores s = pairwise_f1(Partition{{0, 1}, {2, 3, 4}}, Partition{{0, 1, 2}, {3, 4}});
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.5));
  const PairwiseScores same = pairwise_f1(Partition{{0, 1}, {2}}, Partition{{1, 0}, {2}});
  CHECK(same.f1 == doctest::Approx(1.0));
  const PairwiseScores ids = pairwise_f1(IdPartition{{"a", "b"}, {"c"}}, IdPartition{{"a"}, {"b", "c"}});
  CHECK(ids.f1 == 0.0);
  CHECK_THROWS_AS(pairwise_f1(Partition{{0, 1}}, Partition{{0}, {2}}), ContractViolation);
}

TEST_CASE("threshold clustering uses strict cosine similarity") {
  const std::vector<Tensor> e{vec({1, 0}), vec({1, 0.0001}), vec({0, 1}), vec({0, 0}), vec({-1, 0})};
  CHECK(canonical(cluster_by_threshold(e, 0.9)) == Partition{{0, 1}, {2}, {3}, {4}});
  CHECK(canonical(cluster_by_threshold(e, -1.0)) == Partition{{0, 1, 2, 4}, {3}});
  // Cosine of exactly 0 is not > 0.
  const std::vector<Tensor> ortho{vec({1, 0}), vec({0, 1})};
  CHECK(cluster_by_threshold(ortho, 0.0).size() == 2);
  CHECK_THROWS_AS(cluster_by_threshold(e, 1.5), ContractViolation);
}

TEST_CASE("threshold clustering is transitive") {
  // a~b and b~c but not a~c still puts all three together.
  const double t = 0.8;
  const std::vector<Tensor> e{vec({1, 0}), vec({std::cos(0.5), std::sin(0.5)}), vec({std::cos(1.0), std::sin(1.0)})};
  CHECK(canonical(cluster_by_threshold(e, t)) == Partition{{0, 1, 2}});
}

TEST_CASE("disambiguation picks the first best threshold") {
  CHECK(default_thresholds().size() == 7);
  CHECK(default_thresholds().front() == doctest::Approx(0.65));
  CHECK(default_thresholds().back() == doctest::Approx(0.95));

  DisambigBlock b;
  b.name = "n";
  for (const char* id : {"a", "b", "c", "d"}) b.papers.push_back(paper(id));
  b.gold_clusters = {{"a", "b"}, {"c", "d"}};
  // a/b at 0.72 cosine, c/d parallel, groups orthogonal.
  const double ang = std::acos(0.72);
  std::map<std::string, Tensor> emb{{"a", vec({1, 0, 0})},
                                    {"b", vec({std::cos(ang), std::sin(ang), 0})},
                                    {"c", vec({0, 0, 1})},
                                    {"d", vec({0, 0, 2})}};
  Embedder embed = [&](const PaperRecord& p) -> std::optional<Tensor> { return emb.at(p.paper_id); };
  const ClusterResult r = run_disambiguation({b}, {b}, embed);
  CHECK(r.threshold == doctest::Approx(0.65));
  CHECK(r.macro_f1 == doctest::Approx(1.0));
  REQUIRE(r.validation_curve.size() == 7);
  CHECK(r.validation_curve[1].second == doctest::Approx(1.0));
  CHECK(r.validation_curve[2].second < 1.0);
  REQUIRE(r.blocks.size() == 1);
}

TEST_CASE("papers that cannot be embedded are left out of scoring") {
  DisambigBlock b;
  b.name = "n";
  for (const char* id : {"a", "b", "c"}) b.papers.push_back(paper(id));
  b.gold_clusters = {{"a", "b", "c"}};
  Embedder embed = [](const PaperRecord& p) -> std::optional<Tensor> {
    if (p.paper_id == "c") return std::nullopt;
    return vec({1, 1});
  };
  const EmbeddedBlock eb = embed_papers(b, embed);
  CHECK(eb.skipped == std::vector<std::string>{"c"});
  const ClusterResult r = run_disambiguation({b}, {b}, embed, {0.9});
  // Gold shrinks to {a,b}, so the single predicted pair is all there is.
  CHECK(r.blocks[0].scores.precision == doctest::Approx(1.0));
  CHECK(r.blocks[0].scores.recall == doctest::Approx(1.0));
  CHECK(r.blocks[0].predicted == IdPartition{{"a", "b"}});
}

TEST_CASE("block validation") {
  DisambigBlock b;
  b.papers = {paper("a"), paper("b")};
  b.gold_clusters = {{"a"}, {"a", "b"}};
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b.gold_clusters = {{"a"}};
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b.gold_clusters = {{"a"}, {"b"}};
  CHECK_NOTHROW(b.validate());
}

TEST_CASE("synthetic task builders") {
  const GeneratorSpec spec = make_generator_spec(5, 10, 0.1, 3);
  const InferenceTask task = build_inference_task(spec, EntityType::Fos, 4, 3, 0);
  CHECK(task.items.size() == 12);
  for (const auto& it : task.items) {
    CHECK(it.candidates.size() == 4);
    CHECK(it.candidates[it.gold_index] == spec.topics[static_cast<std::size_t>(*it.record.topic_id)].fos[0]);
  }
  CHECK_THROWS_AS(build_inference_task(spec, EntityType::Fos, 6, 1, 0), ConfigError);

  const auto blocks = build_disambiguation_blocks(spec, 3, 2, 4, 0);
  REQUIRE(blocks.size() == 3);
  for (const auto& b : blocks) {
    CHECK_NOTHROW(b.validate());
    CHECK(b.papers.size() == 8);
    for (const auto& p : b.papers) CHECK(p.authors.front() == b.name);
  }
}

TEST_CASE("task files round-trip and report bad lines") {
  const auto dir = temp_dir("tasks");
  const GeneratorSpec spec = make_generator_spec(3, 5, 0.1, 2);
  const InferenceTask task = build_inference_task(spec, EntityType::Venue, 3, 2, 1);
  save_inference_task(task, dir / "t.jsonl");
  const InferenceTask back = load_inference_task(dir / "t.jsonl", EntityType::Venue);
  REQUIRE(back.items.size() == task.items.size());
  CHECK(back.items[3].record == task.items[3].record);
  CHECK(back.items[3].gold_index == task.items[3].gold_index);

  const auto blocks = build_disambiguation_blocks(spec, 2, 2, 3, 0);
  save_blocks(blocks, dir / "b.jsonl");
  const auto bb = load_blocks(dir / "b.jsonl");
  REQUIRE(bb.size() == 2);
  CHECK(bb[1].gold_clusters == blocks[1].gold_clusters);

  std::ofstream(dir / "bad.jsonl") << "\n" << R"({"block": "x", "papers": [], "gold_clusters": [["q"]]})" << "\n";
  try {
    load_blocks(dir / "bad.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}
