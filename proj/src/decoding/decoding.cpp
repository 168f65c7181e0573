#include "entmlm/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "entmlm/errors.hpp"

namespace entmlm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normalize(double total, std::size_t length, double alpha) {
  return alpha == 0.0 ? total : total / std::pow(static_cast<double>(length), alpha);
}

struct Beam {
  std::vector<TokenId> filled;  // kMaskId where still open
  std::vector<DecodeStep> trace;
  double total = 0.0;
};

bool beam_before(const Beam& a, const Beam& b) {
  if (a.total != b.total) return a.total > b.total;
  return a.filled < b.filled;
}

}  // namespace

const char* decode_order_name(DecodeOrder order) {
  return order == DecodeOrder::OutOfOrder ? "out-of-order" : "left-to-right";
}

DecodeOrder parse_decode_order(const std::string& name) {
  if (name == "out-of-order") return DecodeOrder::OutOfOrder;
  if (name == "left-to-right") return DecodeOrder::LeftToRight;
  throw ConfigError("unknown decode order '" + name + "'");
}

void DecodeQuery::validate() const {
  if (min_length < 1 || max_length < min_length) throw ConfigError("invalid entity length range");
  if (beam_width < 1) throw ConfigError("beam width must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
}

std::pair<std::size_t, std::size_t> default_length_range(EntityType type) {
  switch (type) {
    case EntityType::Fos: return {1, 4};
    case EntityType::Venue:
    case EntityType::Affiliation: return {1, 8};
    default: return {1, 4};
  }
}

InputSample build_masked_query(const DecodeQuery& query, std::size_t length, const Vocabulary& vocab,
                               const ModelConfig& config) {
  if (length < 1) throw ContractViolation("entity length must be >= 1");
  if (length > config.max_pos2 || config.max_pos1 < 2) {
    throw ContractViolation("entity length " + std::to_string(length) + " exceeds the model's position limits");
  }
  std::vector<TokenId> title = vocab.tokenize(query.title);
  if (title.empty()) throw InvalidRecord("query title has no tokens");
  std::vector<TokenId> abstract = vocab.tokenize(query.abstract);
  const std::vector<TokenId> prompt = vocab.tokenize(query.prompt);

  const std::size_t limit = std::min(query.max_len, config.max_pos2);
  const std::size_t fixed = 2 + prompt.size() + length;
  if (fixed + 1 > limit) throw ContractViolation("query cannot fit the prompt and mask entity in max_len");
  const std::size_t room = limit - fixed;
  if (title.size() >= room) {
    title.resize(room);
    abstract.clear();
  } else if (title.size() + abstract.size() > room) {
    abstract.resize(room - title.size());
  }

  std::vector<TokenId> text{kClsId};
  text.insert(text.end(), title.begin(), title.end());
  text.insert(text.end(), abstract.begin(), abstract.end());
  text.insert(text.end(), prompt.begin(), prompt.end());
  text.push_back(kSepId);
  return assemble_sample(text, {{query.target, std::vector<TokenId>(length, kMaskId)}});
}

DecodeCandidate score_candidate(const Model& model, const InputSample& query_sample,
                                std::span<const TokenId> tokens, DecodeOrder order, double alpha) {
  const std::size_t l = tokens.size();
  if (l == 0) throw ContractViolation("candidate must have at least one token");
  if (l > query_sample.size()) throw ContractViolation("candidate longer than the query");
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.config().vocab_size) {
      throw ContractViolation("candidate token " + std::to_string(t) + " outside the vocabulary");
    }
  }
  const std::size_t base = query_sample.size() - l;
  for (std::size_t i = base; i < query_sample.size(); ++i) {
    if (query_sample.token_ids[i] != kMaskId) throw ContractViolation("query does not end in an open mask entity");
  }

  InputSample current = query_sample;
  std::vector<std::size_t> open(l);
  std::iota(open.begin(), open.end(), std::size_t{0});
  DecodeCandidate result;
  result.tokens.assign(tokens.begin(), tokens.end());
  while (!open.empty()) {
    std::vector<std::size_t> positions;
    for (std::size_t i : open) positions.push_back(base + i);
    const EncoderOutput out = encoder_forward(model, current, false);
    const Tensor lp = mlm_log_probs(model, out, positions);
    std::size_t pick = 0;
    if (order == DecodeOrder::OutOfOrder) {
      double best = kNegInf;
      for (std::size_t k = 0; k < open.size(); ++k) {
        const double v = lp(k, static_cast<std::size_t>(tokens[open[k]]));
        if (v > best) {
          best = v;
          pick = k;
        }
      }
    }
    const std::size_t pos = open[pick];
    const double logp = lp(pick, static_cast<std::size_t>(tokens[pos]));
    result.trace.push_back({pos, tokens[pos], logp});
    result.total += logp;
    current.token_ids[base + pos] = tokens[pos];
    open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  result.normalized = normalize(result.total, l, alpha);
  return result;
}

DecodeCandidate score_candidate(const Model& model, const Vocabulary& vocab, const DecodeQuery& query,
                                std::span<const TokenId> tokens) {
  const InputSample sample = build_masked_query(query, tokens.size(), vocab, model.config());
  return score_candidate(model, sample, tokens, query.order, query.alpha);
}

void sort_candidates(std::vector<DecodeCandidate>& candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const DecodeCandidate& a, const DecodeCandidate& b) {
    if (a.normalized != b.normalized) return a.normalized > b.normalized;
    if (a.tokens != b.tokens) return a.tokens < b.tokens;
    return a.candidate_index < b.candidate_index;
  });
}

std::vector<DecodeCandidate> rank_candidates(const Model& model, const Vocabulary& vocab,
                                             const DecodeQuery& query,
                                             const std::vector<std::vector<TokenId>>& candidates) {
  if (candidates.empty()) throw ContractViolation("no candidates to rank");
  // Queries depend only on the length, so each is built once.
  std::map<std::size_t, InputSample> queries;
  std::vector<DecodeCandidate> ranked;
  ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::size_t l = candidates[i].size();
    auto it = queries.find(l);
    if (it == queries.end()) it = queries.emplace(l, build_masked_query(query, l, vocab, model.config())).first;
    DecodeCandidate c = score_candidate(model, it->second, candidates[i], query.order, query.alpha);
    c.candidate_index = i;
    ranked.push_back(std::move(c));
  }
  sort_candidates(ranked);
  return ranked;
}

std::vector<DecodeCandidate> generate(const Model& model, const Vocabulary& vocab, const DecodeQuery& query) {
  query.validate();
  const std::size_t vocab_size = model.config().vocab_size;
  if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) throw ContractViolation("vocabulary has no regular tokens");
  const std::size_t branch = std::min(query.beam_width, vocab_size - kNumSpecials);

  std::vector<DecodeCandidate> pool;
  for (std::size_t l = query.min_length; l <= query.max_length; ++l) {
    const InputSample base_sample = build_masked_query(query, l, vocab, model.config());
    const std::size_t base = base_sample.size() - l;
    std::vector<Beam> beams{Beam{std::vector<TokenId>(l, kMaskId), {}, 0.0}};
    for (std::size_t step = 0; step < l; ++step) {
      std::vector<Beam> next;
      for (const Beam& beam : beams) {
        InputSample current = base_sample;
        std::vector<std::size_t> open, positions;
        for (std::size_t i = 0; i < l; ++i) {
          current.token_ids[base + i] = beam.filled[i];
          if (beam.filled[i] == kMaskId) {
            open.push_back(i);
            positions.push_back(base + i);
          }
        }
        const Tensor lp = mlm_log_probs(model, encoder_forward(model, current, false), positions);
        std::size_t pick = 0;
        if (query.order == DecodeOrder::OutOfOrder) {
          double best = kNegInf;
          for (std::size_t k = 0; k < open.size(); ++k) {
            for (std::size_t v = kNumSpecials; v < vocab_size; ++v) {
              if (lp(k, v) > best) {
                best = lp(k, v);
                pick = k;
              }
            }
          }
        }
        std::vector<TokenId> ids(vocab_size - kNumSpecials);
        std::iota(ids.begin(), ids.end(), kNumSpecials);
        std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(branch), ids.end(),
                          [&](TokenId a, TokenId b) {
                            const double x = lp(pick, static_cast<std::size_t>(a));
                            const double y = lp(pick, static_cast<std::size_t>(b));
                            return x != y ? x > y : a < b;
                          });
        for (std::size_t j = 0; j < branch; ++j) {
          Beam child = beam;
          const double logp = lp(pick, static_cast<std::size_t>(ids[j]));
          child.filled[open[pick]] = ids[j];
          child.trace.push_back({open[pick], ids[j], logp});
          child.total += logp;
          next.push_back(std::move(child));
        }
      }
      // Hypotheses that reach the same filled state by different orders are merged.
      std::sort(next.begin(), next.end(), beam_before);
      std::vector<Beam> kept;
      std::vector<std::vector<TokenId>> seen;
      for (Beam& b : next) {
        if (kept.size() == query.beam_width) break;
        if (std::find(seen.begin(), seen.end(), b.filled) != seen.end()) continue;
        seen.push_back(b.filled);
        kept.push_back(std::move(b));
      }
      beams = std::move(kept);
    }
    for (const Beam& b : beams) pool.push_back(score_candidate(model, base_sample, b.filled, query.order, query.alpha));
  }
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i].candidate_index = i;
  sort_candidates(pool);
  if (pool.size() > query.top_k) pool.resize(query.top_k);
  return pool;
}

std::string candidate_to_json(const DecodeCandidate& candidate, const Vocabulary& vocab) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : candidate.trace) {
    trace.push_back({{"position", s.position}, {"token", s.token}, {"log_prob", s.log_prob}});
  }
  std::string text;
  for (TokenId t : candidate.tokens) {
    if (!text.empty()) text += ' ';
    text += vocab.token(t);
  }
  return nlohmann::json{{"tokens", candidate.tokens}, {"text", text}, {"total", candidate.total},
                        {"normalized", candidate.normalized}, {"trace", trace}}
      .dump();
}

}  // namespace entmlm
