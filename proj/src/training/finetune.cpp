#include <algorithm>
#include <cmath>
#include <numeric>

#include "entmlm/errors.hpp"
#include "entmlm/training.hpp"

namespace entmlm {

namespace {

// Cross-entropy on one pooled vector. Accumulates head gradients scaled by
// `scale` and returns d(loss)/d(pooled) with the same scaling.
double head_forward_backward(Model& model, const Tensor& pooled, int label, double scale,
                             Tensor* grad_pooled) {
  Tensor log_probs = log_softmax(classifier_logits(model, pooled));
  const double loss = -log_probs[static_cast<std::size_t>(label)];
  const std::size_t d = pooled.size();
  const std::size_t c = model.num_classes();
  Parameter& w = model.at(model.cls_weight);
  Parameter& b = model.at(model.cls_bias);
  std::vector<double> g(c);
  for (std::size_t k = 0; k < c; ++k) g[k] = std::exp(log_probs[k]) * scale;
  g[static_cast<std::size_t>(label)] -= scale;
  for (std::size_t k = 0; k < c; ++k) b.grad[k] += g[k];
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      w.grad(j, k) += pooled[j] * g[k];
      acc += w.value(j, k) * g[k];
    }
    if (grad_pooled != nullptr) (*grad_pooled)[j] = acc;
  }
  return loss;
}

std::size_t argmax(const Tensor& t) {
  const auto data = t.data();
  return static_cast<std::size_t>(std::max_element(data.begin(), data.end()) - data.begin());
}

}  // namespace

void FinetuneConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup fraction must lie in [0, 1)");
  if (!(peak_lr > 0.0)) throw ConfigError("peak learning rate must be positive");
}

FinetuneResult finetune_classifier(Model& model, const std::vector<LabeledSample>& train,
                                   const std::vector<LabeledSample>& valid, const FinetuneConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  if (!model.has_classifier()) throw ConfigError("model has no classifier head");
  const auto check_labels = [&](const std::vector<LabeledSample>& data) {
    for (const auto& s : data) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.num_classes()) {
        throw ConfigError("label " + std::to_string(s.label) + " outside [0, " +
                          std::to_string(model.num_classes()) + ")");
      }
    }
  };
  check_labels(train);
  check_labels(valid);

  // A frozen encoder is deterministic in eval mode, so pooled features are
  // computed once.
  std::vector<Tensor> train_pooled, valid_pooled;
  if (cfg.freeze_encoder) {
    for (const auto& s : train) {
      train_pooled.push_back(pooled_embedding(encoder_forward(model, s.sample, false).hidden, s.sample.attention_mask));
    }
    for (const auto& s : valid) {
      valid_pooled.push_back(pooled_embedding(encoder_forward(model, s.sample, false).hidden, s.sample.attention_mask));
    }
  }

  std::vector<Parameter*> params = cfg.freeze_encoder ? model.classifier_parameter_ptrs() : model.parameter_ptrs();
  AdamState state;
  Rng order_rng = make_rng(cfg.seed, "finetune-order");
  Rng dropout_rng = make_rng(cfg.seed, "finetune-dropout");
  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = steps_per_epoch * cfg.epochs;

  FinetuneResult result;
  std::vector<std::size_t> order(train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledSample& ex = train[order[i]];
        if (cfg.freeze_encoder) {
          loss += head_forward_backward(model, train_pooled[order[i]], ex.label, scale, nullptr) * scale;
          continue;
        }
        EncoderOutput out = encoder_forward(model, ex.sample, true, &dropout_rng);
        Tensor pooled = pooled_embedding(out.hidden, ex.sample.attention_mask);
        Tensor grad_pooled(pooled.shape());
        loss += head_forward_backward(model, pooled, ex.label, scale, &grad_pooled) * scale;
        const auto count = static_cast<double>(
            std::count(ex.sample.attention_mask.begin(), ex.sample.attention_mask.end(), 1));
        Tensor grad_hidden(out.hidden.shape());
        for (std::size_t t = 0; t < out.hidden.rows(); ++t) {
          if (ex.sample.attention_mask[t] == 0) continue;
          for (std::size_t j = 0; j < pooled.size(); ++j) grad_hidden(t, j) = grad_pooled[j] / count;
        }
        encoder_backward(model, out, grad_hidden);
      }
      if (!std::isfinite(loss)) throw NumericalError("fine-tuning loss became non-finite");
      optimizer_step(params, state, lr_at(step + 1, total + 1, cfg.peak_lr, cfg.warmup_fraction),
                     cfg.weight_decay);
      result.step_losses.push_back(loss);
      ++step;
    }
    if (!valid.empty()) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < valid.size(); ++i) {
        const Tensor scores = cfg.freeze_encoder ? classifier_logits(model, valid_pooled[i])
                                                 : classify_forward(model, valid[i].sample);
        if (argmax(scores) == static_cast<std::size_t>(valid[i].label)) ++correct;
      }
      result.val_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(valid.size()));
    }
  }
  return result;
}

double classifier_loss(const Model& model, const std::vector<LabeledSample>& data) {
  if (data.empty()) throw ContractViolation("classifier loss over an empty set");
  double total = 0.0;
  for (const auto& s : data) total -= classify_forward(model, s.sample)[static_cast<std::size_t>(s.label)];
  return total / static_cast<double>(data.size());
}

}  // namespace entmlm
