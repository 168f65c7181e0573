#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "entmlm/corpus.hpp"
#include "entmlm/gradcheck.hpp"
#include "entmlm/masking.hpp"
#include "entmlm/model.hpp"
#include "entmlm/vocabulary.hpp"

namespace entmlm {

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

/// Slanted-triangular schedule: linear 0 -> peak over the first
/// warmup_fraction * total_steps steps, then linear peak -> 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, double peak, double warmup_fraction);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// One AdamW update from Parameter::grad. Weight decay is decoupled and skipped
/// for parameters with decay == false. Throws NumericalError, before touching
/// any parameter, when a gradient is non-finite.
void optimizer_step(std::span<Parameter* const> params, AdamState& state, double lr,
                    double weight_decay, const AdamWConfig& adam = {});

// ---------------------------------------------------------------------------
// Masked language modeling
// ---------------------------------------------------------------------------

/// Mean over rows of -log_probs[k, labels[k]].
double mlm_loss(const Tensor& log_probs, std::span<const TokenId> labels);

/// Forward + backward of the MLM loss on one masked sample. Gradients are
/// scaled by `grad_scale` and accumulated into the model. Returns the loss.
double mlm_forward_backward(Model& model, const InputSample& masked, const MaskingPlan& plan,
                            bool train_mode, Rng* dropout_rng, double grad_scale);

struct PretrainConfig {
  int stage = 1;  // 1: text only; 2: entity-augmented
  std::size_t max_len = 32;
  std::size_t batch_size = 8;
  std::size_t accumulation_steps = 1;
  std::size_t steps = 1000;
  double peak_lr = 1e-3;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  bool include_abstract = true;
  std::size_t log_every = 10;
  std::uint64_t seed = 0;
  MaskingConfig masking;

  void validate() const;
};

struct MlmExample {
  InputSample input;  // after masking
  MaskingPlan plan;
};

/// Stage 1: text sample with BERT masking. Stage 2: full entity sample with
/// text and span-aware entity masking.
MlmExample make_pretrain_example(const PaperRecord& record, const Vocabulary& vocab,
                                 const PretrainConfig& cfg, Rng& rng);

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct PretrainResult {
  std::vector<double> step_losses;  // one per optimizer step
  std::vector<LossPoint> curve;     // mean loss of each log_every window
};

using ProgressFn = std::function<void(std::size_t step, double loss)>;

/// Throws NumericalError when the loss goes non-finite.
PretrainResult pretrain(const Corpus& corpus, const Vocabulary& vocab, Model& model,
                        const PretrainConfig& cfg, const ProgressFn& progress = {});

std::string loss_curve_tsv(const std::vector<LossPoint>& curve);

/// Random sample over a `vocab_size` vocabulary (a text entity plus three
/// entities of lengths 2, 6 and 3) with text and entity masking applied.
MlmExample random_mlm_example(std::size_t vocab_size, Rng& rng);

/// Finite-difference check of the full-model MLM loss on one example, with
/// dropout off, over every encoder and MLM-head parameter.
GradCheckReport check_mlm_gradients(Model& model, const MlmExample& example,
                                    const GradCheckOptions& options = {});

// ---------------------------------------------------------------------------
// Classification fine-tuning
// ---------------------------------------------------------------------------

struct LabeledSample {
  InputSample sample;
  int label = 0;
};

struct FinetuneConfig {
  std::size_t epochs = 5;
  double peak_lr = 2e-5;
  double warmup_fraction = 0.1;
  bool freeze_encoder = false;
  std::size_t batch_size = 16;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FinetuneResult {
  std::vector<double> step_losses;
  std::vector<double> val_accuracy;  // one per epoch when a validation set is given
};

/// Trains the classifier head (and the encoder unless frozen) with cross-entropy.
/// The model must already carry a classifier head.
FinetuneResult finetune_classifier(Model& model, const std::vector<LabeledSample>& train,
                                   const std::vector<LabeledSample>& valid, const FinetuneConfig& cfg);

/// Mean cross-entropy of the classifier over `data` (eval mode).
double classifier_loss(const Model& model, const std::vector<LabeledSample>& data);

}  // namespace entmlm
