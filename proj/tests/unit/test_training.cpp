#include <doctest.h>

#include <cmath>
#include <limits>

#include "entmlm/errors.hpp"
#include "entmlm/evaluation.hpp"
#include "entmlm/training.hpp"

using namespace entmlm;

namespace {

ModelConfig config_for(std::size_t vocab_size) {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.hidden = 16;
  c.ffn = 32;
  c.vocab_size = vocab_size;
  c.max_pos1 = 32;
  c.max_pos2 = 64;
  c.dropout = 0.0;
  c.seed = 1;
  return c;
}

}  // namespace

TEST_CASE("slanted triangular schedule") {
  CHECK(lr_at(0, 100, 1.0, 0.1) == 0.0);
  CHECK(lr_at(5, 100, 1.0, 0.1) == doctest::Approx(0.5));
  CHECK(lr_at(10, 100, 1.0, 0.1) == doctest::Approx(1.0));
  CHECK(lr_at(55, 100, 1.0, 0.1) == doctest::Approx(0.5));
  CHECK(lr_at(100, 100, 1.0, 0.1) == 0.0);
  CHECK(lr_at(3, 10, 2.0, 0.0) == doctest::Approx(2.0 * 7.0 / 10.0));
  double peak = 0;
  for (std::size_t s = 0; s < 100; ++s) peak = std::max(peak, lr_at(s, 100, 1.0, 0.1));
  CHECK(peak == doctest::Approx(1.0));
}

TEST_CASE("AdamW step matches a hand computation") {
  Parameter w("w", Tensor::matrix(1, 2, {1.0, -2.0}), true);
  Parameter b("b", Tensor::matrix(1, 1, {0.5}), false);
  w.grad = Tensor::matrix(1, 2, {0.1, -0.3});
  b.grad = Tensor::matrix(1, 1, {0.2});
  std::vector<Parameter*> ps{&w, &b};
  AdamState state;
  optimizer_step(ps, state, 0.01, 0.1);
  // First step: m_hat = g, v_hat = g^2, update = g / (|g| + eps).
  auto expect = [](double x, double g, double decay) { return x - 0.01 * (g / (std::abs(g) + 1e-8) + decay * x); };
  CHECK(w.value[0] == doctest::Approx(expect(1.0, 0.1, 0.1)).epsilon(1e-14));
  CHECK(w.value[1] == doctest::Approx(expect(-2.0, -0.3, 0.1)).epsilon(1e-14));
  CHECK(b.value[0] == doctest::Approx(expect(0.5, 0.2, 0.0)).epsilon(1e-14));

  // Second step with the same gradient: bias-corrected moments are unchanged.
  const double w0 = w.value[0];
  optimizer_step(ps, state, 0.01, 0.0);
  CHECK(w.value[0] == doctest::Approx(w0 - 0.01 * 0.1 / (0.1 + 1e-8)).epsilon(1e-12));
  CHECK(state.step == 2);
}

TEST_CASE("non-finite gradients abort before any update") {
  Parameter a("a", Tensor::matrix(1, 1, {1.0}));
  Parameter b("b", Tensor::matrix(1, 1, {2.0}));
  a.grad[0] = 0.5;
  b.grad[0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<Parameter*> ps{&a, &b};
  AdamState state;
  CHECK_THROWS_AS(optimizer_step(ps, state, 0.1, 0.0), NumericalError);
  CHECK(a.value[0] == 1.0);
  CHECK(state.step == 0);
}

TEST_CASE("MLM loss is the mean negative log-likelihood") {
  Tensor lp = Tensor::matrix(2, 3, {std::log(0.5), std::log(0.25), std::log(0.25), std::log(0.1), std::log(0.8),
                                    std::log(0.1)});
  const std::vector<TokenId> labels{0, 1};
  CHECK(mlm_loss(lp, labels) == doctest::Approx(-(std::log(0.5) + std::log(0.8)) / 2));
  CHECK_THROWS_AS(mlm_loss(lp, std::vector<TokenId>{}), ContractViolation);
}

TEST_CASE("pretrain config validation") {
  PretrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.stage = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.warmup_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.masking.geometric_p = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("pretraining examples respect the stage") {
  const Corpus corpus = generate_corpus(make_generator_spec(3, 5, 0.1, 4));
  const Vocabulary vocab = Vocabulary::build(corpus, 1);
  PretrainConfig c;
  Rng rng = make_rng(0, "data");
  const MlmExample one = make_pretrain_example(corpus[0], vocab, c, rng);
  CHECK(one.input.size() <= 32);
  for (int t : one.input.type_ids) CHECK(t == 0);
  c.stage = 2;
  c.max_len = 128;
  const MlmExample two = make_pretrain_example(corpus[0], vocab, c, rng);
  bool has_entity_label = false;
  for (std::size_t k = 0; k < two.plan.size(); ++k)
    has_entity_label |= two.input.type_ids[two.plan.positions[k]] != 0;
  CHECK(has_entity_label);
  CHECK_FALSE(check_sample_invariants(two.input).has_value());
}

TEST_CASE("pretraining lowers the loss and is reproducible") {
  const Corpus corpus = generate_corpus(make_generator_spec(2, 4, 0.0, 8));
  const Vocabulary vocab = Vocabulary::build(corpus, 1);
  PretrainConfig c;
  c.steps = 60;
  c.batch_size = 4;
  c.peak_lr = 3e-3;
  c.log_every = 20;
  Model a(config_for(vocab.size()));
  const PretrainResult ra = pretrain(corpus, vocab, a, c);
  REQUIRE(ra.step_losses.size() == 60);
  REQUIRE(ra.curve.size() == 3);
  CHECK(ra.curve.back().loss < ra.curve.front().loss);
  double first = 0;
  for (std::size_t i = 0; i < 20; ++i) first += ra.step_losses[i] / 20;
  CHECK(ra.curve.front().loss == doctest::Approx(first).epsilon(1e-12));

  Model b(config_for(vocab.size()));
  const PretrainResult rb = pretrain(corpus, vocab, b, c);
  CHECK(ra.step_losses == rb.step_losses);
  CHECK(hash_model(a) == hash_model(b));
  CHECK(loss_curve_tsv(ra.curve).rfind("step\tloss\n", 0) == 0);

  Model wrong(config_for(vocab.size() + 1));
  CHECK_THROWS_AS(pretrain(corpus, vocab, wrong, c), ConfigError);
}

TEST_CASE("gradient accumulation runs") {
  const Corpus corpus = generate_corpus(make_generator_spec(2, 4, 0.0, 8));
  const Vocabulary vocab = Vocabulary::build(corpus, 1);
  PretrainConfig c;
  c.steps = 3;
  c.batch_size = 2;
  c.accumulation_steps = 2;
  Model m(config_for(vocab.size()));
  const PretrainResult r = pretrain(corpus, vocab, m, c);
  for (double l : r.step_losses) CHECK(std::isfinite(l));
}

TEST_CASE("frozen fine-tuning only moves the classifier head") {
  const GeneratorSpec spec = make_generator_spec(3, 12, 0.0, 6);
  const Corpus corpus = generate_corpus(spec);
  const Vocabulary vocab = Vocabulary::build(corpus, 1);
  const auto data = make_labeled_samples(corpus, vocab, FeatureSet::all(), 64, true, 0);
  REQUIRE(data.size() == corpus.size());

  Model m(config_for(vocab.size()));
  m.add_classifier(3, 2);
  const auto enc = hash_encoder(m);
  const auto head = hash_model(m);
  FinetuneConfig fc;
  fc.freeze_encoder = true;
  fc.epochs = 3;
  fc.peak_lr = 1e-2;
  const FinetuneResult r = finetune_classifier(m, data, data, fc);
  CHECK(hash_encoder(m) == enc);
  CHECK(hash_model(m) != head);
  CHECK(r.val_accuracy.size() == 3);

  FinetuneConfig full = fc;
  full.freeze_encoder = false;
  Model n(config_for(vocab.size()));
  n.add_classifier(3, 2);
  const double before = classifier_loss(n, data);
  finetune_classifier(n, data, {}, full);
  CHECK(hash_encoder(n) != enc);
  CHECK(classifier_loss(n, data) < before);
}

TEST_CASE("fine-tuning input checks") {
  Model m(config_for(20));
  LabeledSample s{assemble_sample({kClsId, 6, kSepId}, {}), 0};
  CHECK_THROWS_AS(finetune_classifier(m, {s}, {}, {}), ConfigError);
  m.add_classifier(2, 0);
  CHECK_THROWS_AS(finetune_classifier(m, {}, {}, {}), ConfigError);
  s.label = 2;
  CHECK_THROWS_AS(finetune_classifier(m, {s}, {}, {}), ConfigError);
  FinetuneConfig bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
