#include <cmath>
#include <sstream>

#include "entmlm/errors.hpp"
#include "entmlm/training.hpp"

namespace entmlm {

double mlm_loss(const Tensor& log_probs, std::span<const TokenId> labels) {
  if (labels.empty()) throw ContractViolation("MLM loss needs at least one masked token");
  if (log_probs.rows() != labels.size()) throw ContractViolation("label count does not match log-prob rows");
  double total = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    total -= log_probs(k, static_cast<std::size_t>(labels[k]));
  }
  return total / static_cast<double>(labels.size());
}

double mlm_forward_backward(Model& model, const InputSample& masked, const MaskingPlan& plan,
                            bool train_mode, Rng* dropout_rng, double grad_scale) {
  EncoderOutput out = encoder_forward(model, masked, train_mode, dropout_rng);
  Tensor log_probs = mlm_log_probs(model, out, plan.positions);
  const double loss = mlm_loss(log_probs, plan.labels);
  if (!std::isfinite(loss)) return loss;

  // d(mean NLL)/d(logits) = (softmax - onehot) / k
  const double inv_k = grad_scale / static_cast<double>(plan.size());
  Tensor grad_logits(log_probs.shape());
  for (std::size_t k = 0; k < plan.size(); ++k) {
    for (std::size_t j = 0; j < log_probs.cols(); ++j) {
      grad_logits(k, j) = std::exp(log_probs(k, j)) * inv_k;
    }
    grad_logits(k, static_cast<std::size_t>(plan.labels[k])) -= inv_k;
  }
  Tensor grad_hidden = mlm_head_backward(model, out.hidden, plan.positions, grad_logits);
  encoder_backward(model, out, grad_hidden);
  return loss;
}

void PretrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (steps == 0) throw ConfigError("steps must be >= 1");
  if (batch_size == 0 || accumulation_steps == 0) throw ConfigError("batch size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup fraction must lie in [0, 1)");
  if (max_len < 8) throw ConfigError("max_len must be >= 8");
  if (log_every == 0) throw ConfigError("log_every must be >= 1");
  if (!(peak_lr > 0.0)) throw ConfigError("peak learning rate must be positive");
  masking.validate();
}

MlmExample make_pretrain_example(const PaperRecord& record, const Vocabulary& vocab,
                                 const PretrainConfig& cfg, Rng& rng) {
  InputSample sample;
  MaskingPlan plan;
  if (cfg.stage == 1) {
    sample = build_text_sample(record, vocab, cfg.max_len);
    plan = plan_text_masking(sample, cfg.masking, rng);
  } else {
    SampleOptions opts;
    opts.max_len = cfg.max_len;
    opts.shuffle_seed = rng();
    opts.include_abstract = cfg.include_abstract;
    sample = build_sample(record, vocab, opts);
    plan = merge_plans(plan_text_masking(sample, cfg.masking, rng),
                       plan_entity_masking(sample, cfg.masking, rng));
  }
  return {apply_masking(sample, plan, vocab.size(), rng), std::move(plan)};
}

PretrainResult pretrain(const Corpus& corpus, const Vocabulary& vocab, Model& model,
                        const PretrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (corpus.empty()) throw ConfigError("pretraining corpus is empty");
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("model vocab_size " + std::to_string(model.config().vocab_size) +
                      " differs from vocabulary size " + std::to_string(vocab.size()));
  }
  Rng data_rng = make_rng(cfg.seed, "data");
  Rng mask_rng = make_rng(cfg.seed, "mask");
  Rng dropout_rng = make_rng(cfg.seed, "dropout");
  AdamState state;
  std::vector<Parameter*> params = model.encoder_parameter_ptrs();

  const std::size_t per_step = cfg.batch_size * cfg.accumulation_steps;
  const double scale = 1.0 / static_cast<double>(per_step);
  PretrainResult result;
  double window_sum = 0.0;
  std::size_t window_count = 0;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    model.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_step; ++b) {
      const PaperRecord* record = nullptr;
      MlmExample ex;
      // Records whose title does not tokenize are skipped.
      for (std::size_t attempt = 0; record == nullptr; ++attempt) {
        if (attempt > 100) throw ConfigError("corpus has no usable records");
        const PaperRecord& candidate = corpus[uniform_index(data_rng, 0, corpus.size() - 1)];
        try {
          ex = make_pretrain_example(candidate, vocab, cfg, mask_rng);
          record = &candidate;
        } catch (const InvalidRecord&) {
        }
      }
      loss_sum += mlm_forward_backward(model, ex.input, ex.plan, true, &dropout_rng, scale);
    }
    const double loss = loss_sum * scale;
    if (!std::isfinite(loss)) {
      throw NumericalError("loss became non-finite at step " + std::to_string(step + 1));
    }
    optimizer_step(params, state, lr_at(step + 1, cfg.steps + 1, cfg.peak_lr, cfg.warmup_fraction),
                   cfg.weight_decay);
    result.step_losses.push_back(loss);
    window_sum += loss;
    ++window_count;
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      result.curve.push_back({step + 1, window_sum / static_cast<double>(window_count)});
      window_sum = 0.0;
      window_count = 0;
    }
    if (progress) progress(step + 1, loss);
  }
  return result;
}

std::string loss_curve_tsv(const std::vector<LossPoint>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "step\tloss\n";
  for (const auto& p : curve) out << p.step << '\t' << p.loss << '\n';
  return out.str();
}

MlmExample random_mlm_example(std::size_t vocab_size, Rng& rng) {
  if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) throw ContractViolation("vocabulary has no regular tokens");
  const auto draw = [&](std::size_t n) {
    std::vector<TokenId> ids(n);
    for (auto& id : ids) id = static_cast<TokenId>(uniform_index(rng, kNumSpecials, vocab_size - 1));
    return ids;
  };
  std::vector<TokenId> text{kClsId};
  for (TokenId id : draw(10)) text.push_back(id);
  text.push_back(kSepId);
  const InputSample sample = assemble_sample(
      text, {{EntityType::Author, draw(2)}, {EntityType::Venue, draw(6)}, {EntityType::Fos, draw(3)}});
  MaskingConfig cfg;
  MaskingPlan plan = merge_plans(plan_text_masking(sample, cfg, rng), plan_entity_masking(sample, cfg, rng));
  return {apply_masking(sample, plan, vocab_size, rng), std::move(plan)};
}

GradCheckReport check_mlm_gradients(Model& model, const MlmExample& example,
                                    const GradCheckOptions& options) {
  const LossFn loss = [&](bool with_grad) {
    if (with_grad) return mlm_forward_backward(model, example.input, example.plan, false, nullptr, 1.0);
    const EncoderOutput out = encoder_forward(model, example.input, false);
    return mlm_loss(mlm_log_probs(model, out, example.plan.positions), example.plan.labels);
  };
  return check_gradients(loss, model.encoder_parameter_ptrs(), options);
}

}  // namespace entmlm
