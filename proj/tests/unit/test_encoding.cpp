#include <doctest.h>

#include <cmath>
#include <numeric>

#include "entmlm/corpus.hpp"
#include "entmlm/errors.hpp"
#include "entmlm/masking.hpp"
#include "entmlm/sample.hpp"

using namespace entmlm;

namespace {

struct Fixture {
  Corpus corpus = generate_corpus(make_generator_spec(4, 25, 0.1, 21));
  Vocabulary vocab = Vocabulary::build(corpus, 1);
};

PaperRecord tiny_record() {
  PaperRecord r;
  r.paper_id = "t";
  r.title = "alpha beta";
  r.abstract = "gamma delta epsilon";
  r.authors = {"ann lee"};
  r.fos = {"graph theory"};
  r.venue = "journal of graph theory and friends";
  r.affiliations = {"zeta university"};
  return r;
}

Vocabulary tiny_vocab() {
  return Vocabulary::from_tokens({"alpha", "beta", "gamma", "delta", "epsilon", "ann", "lee", "graph", "theory",
                                  "journal", "of", "and", "friends", "zeta", "university"});
}

}  // namespace

TEST_CASE("build_sample lays out the text entity first with 2D positions") {
  const Vocabulary vocab = tiny_vocab();
  SampleOptions opt;
  opt.features = FeatureSet::parse("fos");
  const InputSample s = build_sample(tiny_record(), vocab, opt);
  // [CLS] alpha beta gamma delta epsilon [SEP] graph theory
  REQUIRE(s.size() == 9);
  CHECK(s.token_ids.front() == kClsId);
  CHECK(s.token_ids[6] == kSepId);
  CHECK(s.pos1 == std::vector<int>{0, 0, 0, 0, 0, 0, 0, 1, 1});
  CHECK(s.pos2 == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 0, 1});
  CHECK(s.type_ids[7] == static_cast<int>(EntityType::Fos));
  CHECK(s.attention_mask == std::vector<int>(9, 1));
  CHECK_FALSE(check_sample_invariants(s).has_value());
}

TEST_CASE("over-long samples drop whole trailing entities before cutting text") {
  const Vocabulary vocab = tiny_vocab();
  SampleOptions opt;
  opt.max_len = 12;
  const InputSample s = build_sample(tiny_record(), vocab, opt);
  CHECK(s.size() <= 12);
  CHECK_FALSE(check_sample_invariants(s).has_value());
  for (const auto& e : entity_spans(s)) {
    if (e.type == EntityType::Text) {
      CHECK(e.length() == 7);
    }
  }
  opt.max_len = 8;
  opt.features = FeatureSet::none();
  const InputSample t = build_sample(tiny_record(), vocab, opt);
  REQUIRE(t.size() == 7);
  opt.max_len = 8;
  PaperRecord longer = tiny_record();
  longer.abstract = "gamma delta epsilon gamma delta epsilon";
  const InputSample u = build_sample(longer, vocab, opt);
  CHECK(u.size() == 8);
  CHECK(u.token_ids.back() == kSepId);
}

TEST_CASE("feature sets parse and restrict entities") {
  CHECK(FeatureSet::parse("title").authors == false);
  const FeatureSet fv = FeatureSet::parse("fos+venue");
  CHECK(fv.fos);
  CHECK(fv.venue);
  CHECK_FALSE(fv.authors);
  CHECK_THROWS_AS(FeatureSet::parse("bogus"), ConfigError);
  CHECK(parse_entity_type("aff") == EntityType::Affiliation);
  CHECK_THROWS_AS(parse_entity_type("paper"), ConfigError);
}

TEST_CASE("empty titles are rejected") {
  PaperRecord r = tiny_record();
  r.title = "   ";
  CHECK_THROWS_AS(build_sample(r, tiny_vocab(), {}), InvalidRecord);
  CHECK_THROWS_AS(build_text_sample(r, tiny_vocab(), 32), InvalidRecord);
}

TEST_CASE("entity order is a seeded shuffle") {
  Fixture f;
  SampleOptions a;
  a.shuffle_seed = 1;
  SampleOptions b = a;
  CHECK(build_sample(f.corpus[3], f.vocab, a) == build_sample(f.corpus[3], f.vocab, b));
  bool differs = false;
  for (std::uint64_t seed = 2; seed < 20 && !differs; ++seed) {
    b.shuffle_seed = seed;
    differs = build_sample(f.corpus[3], f.vocab, a) != build_sample(f.corpus[3], f.vocab, b);
  }
  CHECK(differs);
}

TEST_CASE("text samples put authors between title and abstract") {
  const Vocabulary vocab = tiny_vocab();
  const InputSample s = build_text_sample(tiny_record(), vocab, 32);
  CHECK(s.token_ids == std::vector<TokenId>{kClsId, vocab.id("alpha"), vocab.id("beta"), vocab.id("ann"),
                                            vocab.id("lee"), vocab.id("gamma"), vocab.id("delta"),
                                            vocab.id("epsilon"), kSepId});
  CHECK(entity_spans(s).size() == 1);
}

TEST_CASE("entity_spans inverts assemble_sample") {
  const std::vector<TokenId> text{kClsId, 7, 8, kSepId};
  const std::vector<std::pair<EntityType, std::vector<TokenId>>> ents{
      {EntityType::Author, {9, 10}}, {EntityType::Fos, {11}}, {EntityType::Venue, {12, 13, 14}}};
  const InputSample s = assemble_sample(text, ents);
  const auto spans = entity_spans(s);
  REQUIRE(spans.size() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(spans[i + 1].type == ents[i].first);
    CHECK(spans[i + 1].token_ids == ents[i].second);
    CHECK(spans[i + 1].entity_index == static_cast<int>(i + 1));
  }
  CHECK(spans[3].begin == 7);
}

TEST_CASE("invariant checker flags broken samples") {
  const InputSample good = assemble_sample({kClsId, 7, kSepId}, {{EntityType::Fos, {8, 9}}});
  CHECK_FALSE(check_sample_invariants(good).has_value());
  InputSample bad = good;
  bad.pos2[4] = 3;
  CHECK(check_sample_invariants(bad).has_value());
  bad = good;
  bad.pos1[3] = 2;
  bad.pos1[4] = 2;
  CHECK(check_sample_invariants(bad).has_value());
  bad = good;
  bad.type_ids.pop_back();
  CHECK(check_sample_invariants(bad).has_value());
  bad = good;
  bad.type_ids[4] = static_cast<int>(EntityType::Venue);
  CHECK(check_sample_invariants(bad).has_value());
}

TEST_CASE("span length pmf is the renormalized truncated geometric") {
  MaskingConfig cfg;
  double total = 0;
  for (int l = 0; l <= 20; ++l) total += span_length_pmf(cfg, l);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(span_length_pmf(cfg, 3) == 0.0);
  CHECK(span_length_pmf(cfg, 11) == 0.0);
  // Ratio of neighbours equals 1 - p.
  for (int l = 4; l < 10; ++l) {
    CHECK(span_length_pmf(cfg, l + 1) / span_length_pmf(cfg, l) == doctest::Approx(0.8));
  }
  Rng rng = make_rng(0, "mask");
  for (int i = 0; i < 1000; ++i) {
    const int l = sample_span_length(cfg, rng);
    CHECK((l >= 4 && l <= 10));
  }
}

TEST_CASE("masking budget rounds half up with a floor of one") {
  CHECK(masking_budget(0.15, 0) == 0);
  CHECK(masking_budget(0.15, 1) == 1);
  CHECK(masking_budget(0.15, 10) == 2);   // 1.5 -> 2
  CHECK(masking_budget(0.15, 20) == 3);
  CHECK(masking_budget(0.15, 100) == 15);
}

TEST_CASE("masking config validation") {
  MaskingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.span_min = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.mask_prob = 0.95;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.text_mask_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("text masking never touches CLS, SEP or entity tokens") {
  Fixture f;
  MaskingConfig cfg;
  Rng rng = make_rng(1, "mask");
  for (std::size_t i = 0; i < f.corpus.size(); ++i) {
    const InputSample s = build_sample(f.corpus[i], f.vocab, {});
    const MaskingPlan plan = plan_text_masking(s, cfg, rng);
    REQUIRE_FALSE(plan.empty());
    for (std::size_t k = 0; k < plan.size(); ++k) {
      const std::size_t p = plan.positions[k];
      CHECK(s.type_ids[p] == static_cast<int>(EntityType::Text));
      CHECK(s.token_ids[p] != kClsId);
      CHECK(s.token_ids[p] != kSepId);
      CHECK(plan.labels[k] == s.token_ids[p]);
      if (k > 0) CHECK(plan.positions[k] > plan.positions[k - 1]);
    }
  }
}

TEST_CASE("entity masking: whole short entities, contiguous spans, one action per span") {
  Fixture f;
  MaskingConfig cfg;
  Rng rng = make_rng(2, "mask");
  for (std::size_t i = 0; i < f.corpus.size(); ++i) {
    const InputSample s = build_sample(f.corpus[i], f.vocab, {});
    const MaskingPlan plan = plan_entity_masking(s, cfg, rng);
    REQUIRE_FALSE(plan.empty());
    for (const auto& e : entity_spans(s)) {
      if (e.type == EntityType::Text) continue;
      std::vector<std::size_t> hit;
      std::vector<MaskAction> acts;
      for (std::size_t k = 0; k < plan.size(); ++k) {
        if (plan.positions[k] >= e.begin && plan.positions[k] < e.begin + e.length()) {
          hit.push_back(plan.positions[k]);
          acts.push_back(plan.actions[k]);
        }
      }
      if (hit.empty()) continue;
      if (e.length() < 4) CHECK(hit.size() == e.length());
      CHECK(hit.back() - hit.front() + 1 == hit.size());
      CHECK(std::count(acts.begin(), acts.end(), acts.front()) == static_cast<long>(acts.size()));
    }
  }
}

TEST_CASE("merging overlapping plans is a contract violation") {
  MaskingPlan a{{1, 3}, {7, 8}, {MaskAction::Mask, MaskAction::Keep}};
  MaskingPlan b{{2}, {9}, {MaskAction::Random}};
  const MaskingPlan m = merge_plans(a, b);
  CHECK(m.positions == std::vector<std::size_t>{1, 2, 3});
  CHECK(m.labels == std::vector<TokenId>{7, 9, 8});
  MaskingPlan c{{3}, {8}, {MaskAction::Mask}};
  CHECK_THROWS_AS(merge_plans(a, c), ContractViolation);
}

TEST_CASE("apply_masking replaces tokens per action") {
  const InputSample s = assemble_sample({kClsId, 10, 11, 12, kSepId}, {});
  MaskingPlan plan{{1, 2, 3}, {10, 11, 12}, {MaskAction::Mask, MaskAction::Random, MaskAction::Keep}};
  Rng rng = make_rng(3, "mask");
  const InputSample out = apply_masking(s, plan, 20, rng);
  CHECK(out.token_ids[1] == kMaskId);
  CHECK(out.token_ids[2] >= kNumSpecials);
  CHECK(out.token_ids[2] < 20);
  CHECK(out.token_ids[3] == 12);
  CHECK(out.pos1 == s.pos1);
  MaskingPlan oob{{9}, {1}, {MaskAction::Mask}};
  CHECK_THROWS_AS(apply_masking(s, oob, 20, rng), ContractViolation);
  CHECK_THROWS_AS(apply_masking(s, plan, 5, rng), ContractViolation);
}
