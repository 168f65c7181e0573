#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "entmlm/ops.hpp"
#include "entmlm/rng.hpp"
#include "entmlm/sample.hpp"
#include "entmlm/tensor.hpp"

namespace entmlm {

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t hidden = 64;
  std::size_t ffn = 256;
  std::size_t vocab_size = 0;
  std::size_t num_entity_types = kNumEntityTypes;
  std::size_t max_pos1 = 32;
  std::size_t max_pos2 = 128;
  double dropout = 0.1;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// All trainable tensors of the encoder, the MLM head and the optional
/// classifier head, stored in a fixed order.
class Model {
 public:
  struct LayerParams {
    std::size_t ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  /// Randomly initialized from config.seed: normal(0, init_std) matrices,
  /// zero biases, unit layer-norm gains.
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> parameter_ptrs();
  /// Everything except the classifier head.
  std::vector<Parameter*> encoder_parameter_ptrs();
  std::vector<Parameter*> classifier_parameter_ptrs();

  Parameter& param(std::string_view name);
  const Parameter& param(std::string_view name) const;
  Parameter& at(std::size_t index) { return params_[index]; }
  const Parameter& at(std::size_t index) const { return params_[index]; }

  void add_classifier(std::size_t num_classes, std::uint64_t seed);
  bool has_classifier() const { return num_classes_ > 0; }
  std::size_t num_classes() const { return num_classes_; }

  void zero_grad();

  std::size_t token_emb = 0, type_emb = 0, pos1_emb = 0, pos2_emb = 0;
  std::vector<LayerParams> layers;
  std::size_t final_gain = 0, final_bias = 0, mlm_weight = 0, mlm_bias = 0;
  std::size_t cls_weight = 0, cls_bias = 0;

 private:
  std::size_t add(std::string name, Tensor value, bool decay);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::size_t num_classes_ = 0;
};

struct LayerCache {
  Tensor input;
  LayerNormResult ln1;
  Tensor q, k, v;
  std::vector<Tensor> probs;  // one [n x n] matrix per head
  Tensor context;
  Tensor attn_drop;
  Tensor mid;  // residual stream after attention
  LayerNormResult ln2;
  Tensor ffn_pre;
  Tensor ffn_act;
  Tensor ffn_drop;
};

/// Final hidden states plus what the backward pass needs.
struct EncoderOutput {
  Tensor hidden;  // [n x d], after the final layer norm
  InputSample sample;
  Tensor embed_drop;
  std::vector<LayerCache> layers;
  LayerNormResult final_ln;
};

/// Row t = token[t] + type[t] + pos1[t] + pos2[t] embeddings.
Tensor embed(const Model& model, const InputSample& sample);

/// Pre-LN blocks: x += Attn(LN(x)); x += FFN(LN(x)); then a final LN.
/// Dropout is applied only when `train_mode` is set, drawing from `dropout_rng`.
EncoderOutput encoder_forward(const Model& model, const InputSample& sample, bool train_mode,
                              Rng* dropout_rng = nullptr);

/// Accumulates parameter gradients given d(loss)/d(hidden).
void encoder_backward(Model& model, const EncoderOutput& output, const Tensor& grad_hidden);

/// Raw MLM head scores at `positions`: [k x vocab].
Tensor mlm_logits(const Model& model, const Tensor& hidden, std::span<const std::size_t> positions);
/// Log-softmax over the vocabulary at `positions`.
Tensor mlm_log_probs(const Model& model, const EncoderOutput& output,
                     std::span<const std::size_t> positions);
/// Accumulates head gradients and returns d(loss)/d(hidden) ([n x d]).
Tensor mlm_head_backward(Model& model, const Tensor& hidden, std::span<const std::size_t> positions,
                         const Tensor& grad_logits);

/// Mean of the hidden rows whose attention mask is 1.
Tensor pooled_embedding(const Tensor& hidden, std::span<const int> attention_mask);

/// log-softmax(pooled · W + b) over the classifier classes.
Tensor classify_forward(const Model& model, const InputSample& sample);
Tensor classifier_logits(const Model& model, const Tensor& pooled);

/// Order-sensitive FNV-1a hash of parameter bytes.
std::uint64_t hash_parameters(std::span<const Parameter* const> params);
std::uint64_t hash_model(const Model& model);
std::uint64_t hash_encoder(const Model& model);

}  // namespace entmlm
