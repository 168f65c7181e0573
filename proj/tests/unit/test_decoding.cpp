#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "entmlm/decoding.hpp"
#include "entmlm/errors.hpp"

using namespace entmlm;

namespace {

// Five regular tokens: a..e.
Vocabulary small_vocab() { return Vocabulary::from_tokens({"a", "b", "c", "d", "e"}); }

Model small_model(std::uint64_t seed) {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.hidden = 8;
  c.ffn = 16;
  c.vocab_size = 10;
  c.max_pos1 = 4;
  c.max_pos2 = 16;
  c.dropout = 0.0;
  c.init_std = 0.5;  // peaky distributions make order effects visible
  c.seed = seed;
  return Model(c);
}

DecodeQuery small_query() {
  DecodeQuery q;
  q.title = "a b c";
  q.min_length = 1;
  q.max_length = 2;
  q.max_len = 16;
  return q;
}

// log p(tok at sample index p | current fill), one encoder run.
double conditional(const Model& m, const InputSample& s, std::size_t p, TokenId tok) {
  const std::vector<std::size_t> positions{p};
  return mlm_log_probs(m, encoder_forward(m, s, false), positions)(0, static_cast<std::size_t>(tok));
}

}  // namespace

TEST_CASE("decode order names round-trip") {
  CHECK(parse_decode_order(decode_order_name(DecodeOrder::OutOfOrder)) == DecodeOrder::OutOfOrder);
  CHECK(parse_decode_order("left-to-right") == DecodeOrder::LeftToRight);
  CHECK_THROWS_AS(parse_decode_order("random"), ConfigError);
  DecodeQuery q;
  q.min_length = 3;
  q.max_length = 2;
  CHECK_THROWS_AS(q.validate(), ConfigError);
  CHECK(default_length_range(EntityType::Fos) == std::pair<std::size_t, std::size_t>{1, 4});
  CHECK(default_length_range(EntityType::Venue).second == 8);
}

TEST_CASE("masked query layout and truncation") {
  const Vocabulary vocab = small_vocab();
  const Model m = small_model(1);
  DecodeQuery q = small_query();
  q.abstract = "d d d d";
  q.prompt = "e :";
  const InputSample s = build_masked_query(q, 2, vocab, m.config());
  // [CLS] a b c d d d d e [UNK] [SEP] [MASK] [MASK]
  REQUIRE(s.size() == 13);
  CHECK(s.token_ids[9] == kUnkId);
  CHECK(s.token_ids[10] == kSepId);
  CHECK(s.token_ids[11] == kMaskId);
  CHECK(s.type_ids[12] == static_cast<int>(EntityType::Fos));
  CHECK(s.pos1[12] == 1);
  CHECK(s.pos2[12] == 1);

  q.max_len = 10;  // room for title plus one abstract token
  const InputSample t = build_masked_query(q, 2, vocab, m.config());
  CHECK(t.size() == 10);
  CHECK(t.token_ids[4] == vocab.id("d"));
  CHECK(t.token_ids[5] == vocab.id("e"));

  q.max_len = 8;  // only two title tokens fit
  const InputSample u = build_masked_query(q, 2, vocab, m.config());
  CHECK(u.size() == 8);
  CHECK(u.token_ids[2] == vocab.id("b"));
  CHECK(u.token_ids[3] == vocab.id("e"));

  q.max_len = 5;
  CHECK_THROWS_AS(build_masked_query(q, 2, vocab, m.config()), ContractViolation);
  DecodeQuery empty = small_query();
  empty.title = "";
  CHECK_THROWS_AS(build_masked_query(empty, 1, vocab, m.config()), InvalidRecord);
}

TEST_CASE("left-to-right scoring is the chain of conditionals") {
  const Vocabulary vocab = small_vocab();
  const Model m = small_model(2);
  DecodeQuery q = small_query();
  q.order = DecodeOrder::LeftToRight;
  const std::vector<TokenId> cand{7, 5};
  const DecodeCandidate c = score_candidate(m, vocab, q, cand);

  InputSample s = build_masked_query(q, 2, vocab, m.config());
  const double first = conditional(m, s, s.size() - 2, 7);
  s.token_ids[s.size() - 2] = 7;
  const double second = conditional(m, s, s.size() - 1, 5);
  CHECK(c.total == doctest::Approx(first + second).epsilon(1e-12));
  REQUIRE(c.trace.size() == 2);
  CHECK(c.trace[0].position == 0);
  CHECK(c.trace[1].position == 1);
  CHECK(c.normalized == c.total);

  q.alpha = 1.0;
  const DecodeCandidate avg = score_candidate(m, vocab, q, cand);
  CHECK(avg.normalized == doctest::Approx(c.total / 2.0));
}

TEST_CASE("out-of-order scoring fills the most confident position first") {
  const Vocabulary vocab = small_vocab();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Model m = small_model(seed);
    const DecodeQuery q = small_query();
    const std::vector<TokenId> cand{6, 8};
    const DecodeCandidate c = score_candidate(m, vocab, q, cand);
    const InputSample s = build_masked_query(q, 2, vocab, m.config());
    const double p0 = conditional(m, s, s.size() - 2, 6);
    const double p1 = conditional(m, s, s.size() - 1, 8);
    REQUIRE(c.trace.size() == 2);
    CHECK(c.trace[0].position == (p1 > p0 ? 1u : 0u));
    CHECK(c.trace[0].log_prob == doctest::Approx(std::max(p0, p1)).epsilon(1e-12));
  }
}

TEST_CASE("candidate validation") {
  const Vocabulary vocab = small_vocab();
  const Model m = small_model(1);
  const InputSample s = build_masked_query(small_query(), 2, vocab, m.config());
  const std::vector<TokenId> too_big{5, 12};
  CHECK_THROWS_AS(score_candidate(m, s, too_big, DecodeOrder::OutOfOrder, 0.0), ContractViolation);
  const std::vector<TokenId> too_long{5, 6, 7};
  CHECK_THROWS_AS(score_candidate(m, s, too_long, DecodeOrder::OutOfOrder, 0.0), ContractViolation);
  CHECK_THROWS_AS(score_candidate(m, s, std::vector<TokenId>{}, DecodeOrder::OutOfOrder, 0.0), ContractViolation);
}

TEST_CASE("ranking ties break by token sequence then input order") {
  std::vector<DecodeCandidate> cs(4);
  cs[0] = {{7}, -1.0, -1.0, {}, 0};
  cs[1] = {{6}, -1.0, -1.0, {}, 1};
  cs[2] = {{6}, -1.0, -1.0, {}, 2};
  cs[3] = {{9}, -0.5, -0.5, {}, 3};
  sort_candidates(cs);
  CHECK(cs[0].candidate_index == 3);
  CHECK(cs[1].candidate_index == 1);
  CHECK(cs[2].candidate_index == 2);
  CHECK(cs[3].candidate_index == 0);
}

TEST_CASE("rank_candidates keeps caller indices") {
  const Vocabulary vocab = small_vocab();
  const Model m = small_model(3);
  const std::vector<std::vector<TokenId>> cands{{5}, {6, 7}, {8}};
  const auto ranked = rank_candidates(m, vocab, small_query(), cands);
  REQUIRE(ranked.size() == 3);
  for (const auto& r : ranked) CHECK(r.tokens == cands[r.candidate_index]);
  CHECK(ranked[0].normalized >= ranked[1].normalized);
  CHECK_THROWS_AS(rank_candidates(m, vocab, small_query(), {}), ContractViolation);
}

TEST_CASE("generate with a wide beam equals exhaustive enumeration") {
  const Vocabulary vocab = small_vocab();
  for (DecodeOrder order : {DecodeOrder::OutOfOrder, DecodeOrder::LeftToRight}) {
    const Model m = small_model(4);
    DecodeQuery q = small_query();
    q.order = order;
    q.beam_width = 100;
    q.top_k = 30;
    std::vector<std::vector<TokenId>> all;
    for (TokenId a = kNumSpecials; a < 10; ++a) {
      all.push_back({a});
      for (TokenId b = kNumSpecials; b < 10; ++b) all.push_back({a, b});
    }
    const auto expected = rank_candidates(m, vocab, q, all);
    const auto got = generate(m, vocab, q);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].tokens == expected[i].tokens);
      CHECK(got[i].normalized == expected[i].normalized);
    }
  }
}

TEST_CASE("generate respects top_k and never emits specials") {
  const Vocabulary vocab = small_vocab();
  const Model m = small_model(5);
  DecodeQuery q = small_query();
  q.beam_width = 2;
  q.top_k = 3;
  const auto got = generate(m, vocab, q);
  CHECK(got.size() == 3);
  for (const auto& c : got)
    for (TokenId t : c.tokens) CHECK_FALSE(is_special(t));
  const std::string json = candidate_to_json(got[0], vocab);
  CHECK(json.find("\"trace\"") != std::string::npos);
  CHECK(json.find("\"normalized\"") != std::string::npos);
}
