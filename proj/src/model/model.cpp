#include "entmlm/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "entmlm/errors.hpp"

namespace entmlm {

namespace {

Tensor random_normal(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Inverted dropout mask with entries 0 or 1/(1-p).
Tensor dropout_mask(std::vector<std::size_t> shape, double p, Rng& rng) {
  Tensor m(std::move(shape));
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& v : m.data()) v = uniform01(rng) < p ? 0.0 : keep_scale;
  return m;
}

void multiply_inplace(Tensor& x, const Tensor& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

void add_inplace(Tensor& x, const Tensor& y) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

void add_to_grad(Parameter& p, const Tensor& g) {
  for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
}

// y = x W + b
Tensor linear(const Tensor& x, const Parameter& w, const Parameter& b) {
  Tensor y = matmul(x, w.value);
  add_row_bias(y, b.value);
  return y;
}

// Accumulates W and b grads; returns dx.
Tensor linear_backward(const Tensor& x, Parameter& w, Parameter& b, const Tensor& grad_y) {
  gemm_tn(x.data(), grad_y.data(), w.grad.data(), x.cols(), x.rows(), grad_y.cols(), true);
  accumulate_bias_grad(grad_y, b.grad);
  Tensor dx({x.rows(), x.cols()});
  gemm_nt(grad_y.data(), w.value.data(), dx.data(), grad_y.rows(), grad_y.cols(), x.cols(), false);
  return dx;
}

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t head_dim) {
  Tensor out({x.rows(), head_dim});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::memcpy(&out(r, 0), x.row(r).data() + head * head_dim, head_dim * sizeof(double));
  }
  return out;
}

void add_head_slice(Tensor& x, const Tensor& part, std::size_t head, std::size_t head_dim) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < head_dim; ++j) x(r, head * head_dim + j) += part(r, j);
  }
}

void check_ids(const Model& model, const InputSample& s) {
  const ModelConfig& c = model.config();
  if (s.size() == 0) throw ContractViolation("empty sample");
  if (s.type_ids.size() != s.size() || s.pos1.size() != s.size() || s.pos2.size() != s.size() ||
      s.attention_mask.size() != s.size()) {
    throw ContractViolation("sample arrays have different lengths");
  }
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (s.token_ids[t] < 0 || static_cast<std::size_t>(s.token_ids[t]) >= c.vocab_size ||
        s.type_ids[t] < 0 || static_cast<std::size_t>(s.type_ids[t]) >= c.num_entity_types ||
        s.pos1[t] < 0 || static_cast<std::size_t>(s.pos1[t]) >= c.max_pos1 || s.pos2[t] < 0 ||
        static_cast<std::size_t>(s.pos2[t]) >= c.max_pos2) {
      throw ContractViolation("input id out of embedding table range at position " + std::to_string(t));
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (num_layers == 0 || num_heads == 0 || hidden == 0 || ffn == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (hidden % num_heads != 0) throw ConfigError("hidden size must be divisible by num_heads");
  if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) {
    throw ConfigError("vocab_size must exceed the number of special tokens");
  }
  if (num_entity_types != static_cast<std::size_t>(kNumEntityTypes)) {
    throw ConfigError("num_entity_types must be 5");
  }
  if (max_pos1 == 0 || max_pos2 == 0) throw ConfigError("position tables must be non-empty");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t Model::add(std::string name, Tensor value, bool decay) {
  params_.emplace_back(std::move(name), std::move(value), decay);
  return params_.size() - 1;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng = make_rng(config_.seed, "init");
  const std::size_t d = config_.hidden;
  const double s = config_.init_std;
  token_emb = add("embeddings.token", random_normal({config_.vocab_size, d}, s, rng), true);
  type_emb = add("embeddings.type", random_normal({config_.num_entity_types, d}, s, rng), true);
  pos1_emb = add("embeddings.pos1", random_normal({config_.max_pos1, d}, s, rng), true);
  pos2_emb = add("embeddings.pos2", random_normal({config_.max_pos2, d}, s, rng), true);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerParams lp{};
    lp.ln1_gain = add(p + "ln1.gain", Tensor({d}, 1.0), false);
    lp.ln1_bias = add(p + "ln1.bias", Tensor({d}), false);
    lp.wq = add(p + "attn.wq", random_normal({d, d}, s, rng), true);
    lp.bq = add(p + "attn.bq", Tensor({d}), false);
    lp.wk = add(p + "attn.wk", random_normal({d, d}, s, rng), true);
    lp.bk = add(p + "attn.bk", Tensor({d}), false);
    lp.wv = add(p + "attn.wv", random_normal({d, d}, s, rng), true);
    lp.bv = add(p + "attn.bv", Tensor({d}), false);
    lp.wo = add(p + "attn.wo", random_normal({d, d}, s, rng), true);
    lp.bo = add(p + "attn.bo", Tensor({d}), false);
    lp.ln2_gain = add(p + "ln2.gain", Tensor({d}, 1.0), false);
    lp.ln2_bias = add(p + "ln2.bias", Tensor({d}), false);
    lp.w1 = add(p + "ffn.w1", random_normal({d, config_.ffn}, s, rng), true);
    lp.b1 = add(p + "ffn.b1", Tensor({config_.ffn}), false);
    lp.w2 = add(p + "ffn.w2", random_normal({config_.ffn, d}, s, rng), true);
    lp.b2 = add(p + "ffn.b2", Tensor({d}), false);
    layers.push_back(lp);
  }
  final_gain = add("final_ln.gain", Tensor({d}, 1.0), false);
  final_bias = add("final_ln.bias", Tensor({d}), false);
  mlm_weight = add("mlm.weight", random_normal({d, config_.vocab_size}, s, rng), true);
  mlm_bias = add("mlm.bias", Tensor({config_.vocab_size}), false);
}

void Model::add_classifier(std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0) throw ConfigError("classifier needs at least one class");
  if (has_classifier()) throw ConfigError("model already has a classifier head");
  Rng rng = make_rng(seed, "classifier-init");
  cls_weight = add("classifier.weight", random_normal({config_.hidden, num_classes}, config_.init_std, rng), true);
  cls_bias = add("classifier.bias", Tensor({num_classes}), false);
  num_classes_ = num_classes;
}

std::vector<Parameter*> Model::parameter_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> Model::encoder_parameter_ptrs() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (has_classifier() && (i == cls_weight || i == cls_bias)) continue;
    out.push_back(&params_[i]);
  }
  return out;
}

std::vector<Parameter*> Model::classifier_parameter_ptrs() {
  if (!has_classifier()) return {};
  return {&params_[cls_weight], &params_[cls_bias]};
}

Parameter& Model::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractViolation("no parameter named " + std::string(name));
}

const Parameter& Model::param(std::string_view name) const {
  return const_cast<Model*>(this)->param(name);
}

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Tensor embed(const Model& model, const InputSample& sample) {
  check_ids(model, sample);
  const std::size_t d = model.config().hidden;
  Tensor x({sample.size(), d});
  const Tensor& tok = model.at(model.token_emb).value;
  const Tensor& typ = model.at(model.type_emb).value;
  const Tensor& p1 = model.at(model.pos1_emb).value;
  const Tensor& p2 = model.at(model.pos2_emb).value;
  for (std::size_t t = 0; t < sample.size(); ++t) {
    auto a = tok.row(static_cast<std::size_t>(sample.token_ids[t]));
    auto b = typ.row(static_cast<std::size_t>(sample.type_ids[t]));
    auto c = p1.row(static_cast<std::size_t>(sample.pos1[t]));
    auto e = p2.row(static_cast<std::size_t>(sample.pos2[t]));
    auto out = x.row(t);
    for (std::size_t j = 0; j < d; ++j) out[j] = a[j] + b[j] + c[j] + e[j];
  }
  return x;
}

EncoderOutput encoder_forward(const Model& model, const InputSample& sample, bool train_mode,
                              Rng* dropout_rng) {
  const ModelConfig& cfg = model.config();
  const bool use_dropout = train_mode && cfg.dropout > 0.0;
  if (use_dropout && dropout_rng == nullptr) {
    throw ContractViolation("training-mode forward with dropout needs an rng");
  }
  const std::size_t n = sample.size();
  const std::size_t d = cfg.hidden;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  EncoderOutput out;
  out.sample = sample;
  Tensor x = embed(model, sample);
  if (use_dropout) {
    out.embed_drop = dropout_mask(x.shape(), cfg.dropout, *dropout_rng);
    multiply_inplace(x, out.embed_drop);
  }

  out.layers.reserve(cfg.num_layers);
  for (const auto& lp : model.layers) {
    LayerCache c;
    c.input = x;
    c.ln1 = layer_norm(x, model.at(lp.ln1_gain).value, model.at(lp.ln1_bias).value);
    const Tensor& a = c.ln1.out;
    c.q = linear(a, model.at(lp.wq), model.at(lp.bq));
    c.k = linear(a, model.at(lp.wk), model.at(lp.bk));
    c.v = linear(a, model.at(lp.wv), model.at(lp.bv));
    c.context = Tensor({n, d});
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor qh = head_slice(c.q, h, hd);
      Tensor kh = head_slice(c.k, h, hd);
      Tensor vh = head_slice(c.v, h, hd);
      Tensor scores({n, n});
      gemm_nt(qh.data(), kh.data(), scores.data(), n, hd, n, false);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          scores(i, j) = sample.attention_mask[j] ? scores(i, j) * scale
                                                  : -std::numeric_limits<double>::infinity();
        }
      }
      Tensor probs = softmax(scores, 1);
      Tensor ctx = matmul(probs, vh);
      add_head_slice(c.context, ctx, h, hd);
      c.probs.push_back(std::move(probs));
    }
    Tensor attn = linear(c.context, model.at(lp.wo), model.at(lp.bo));
    if (use_dropout) {
      c.attn_drop = dropout_mask(attn.shape(), cfg.dropout, *dropout_rng);
      multiply_inplace(attn, c.attn_drop);
    }
    add_inplace(x, attn);
    c.mid = x;

    c.ln2 = layer_norm(x, model.at(lp.ln2_gain).value, model.at(lp.ln2_bias).value);
    c.ffn_pre = linear(c.ln2.out, model.at(lp.w1), model.at(lp.b1));
    c.ffn_act = gelu(c.ffn_pre);
    Tensor f = linear(c.ffn_act, model.at(lp.w2), model.at(lp.b2));
    if (use_dropout) {
      c.ffn_drop = dropout_mask(f.shape(), cfg.dropout, *dropout_rng);
      multiply_inplace(f, c.ffn_drop);
    }
    add_inplace(x, f);
    out.layers.push_back(std::move(c));
  }
  out.final_ln = layer_norm(x, model.at(model.final_gain).value, model.at(model.final_bias).value);
  out.hidden = out.final_ln.out;
  return out;
}

void encoder_backward(Model& model, const EncoderOutput& out, const Tensor& grad_hidden) {
  const ModelConfig& cfg = model.config();
  const std::size_t n = out.sample.size();
  const std::size_t d = cfg.hidden;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  LayerNormGrads fg = layer_norm_backward(out.final_ln, model.at(model.final_gain).value, grad_hidden);
  add_to_grad(model.at(model.final_gain), fg.gain);
  add_to_grad(model.at(model.final_bias), fg.bias);
  Tensor dx = std::move(fg.x);

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& lp = model.layers[li];
    const LayerCache& c = out.layers[li];

    // Feed-forward branch.
    Tensor df = dx;
    multiply_inplace(df, c.ffn_drop);
    Tensor dact = linear_backward(c.ffn_act, model.at(lp.w2), model.at(lp.b2), df);
    Tensor dpre = gelu_backward(c.ffn_pre, dact);
    Tensor dln2 = linear_backward(c.ln2.out, model.at(lp.w1), model.at(lp.b1), dpre);
    LayerNormGrads g2 = layer_norm_backward(c.ln2, model.at(lp.ln2_gain).value, dln2);
    add_to_grad(model.at(lp.ln2_gain), g2.gain);
    add_to_grad(model.at(lp.ln2_bias), g2.bias);
    add_inplace(dx, g2.x);

    // Attention branch.
    Tensor dattn = dx;
    multiply_inplace(dattn, c.attn_drop);
    Tensor dctx = linear_backward(c.context, model.at(lp.wo), model.at(lp.bo), dattn);
    Tensor dq({n, d}), dk({n, d}), dv({n, d});
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor& p = c.probs[h];
      Tensor qh = head_slice(c.q, h, hd);
      Tensor kh = head_slice(c.k, h, hd);
      Tensor vh = head_slice(c.v, h, hd);
      Tensor dctx_h = head_slice(dctx, h, hd);
      Tensor dp({n, n});
      gemm_nt(dctx_h.data(), vh.data(), dp.data(), n, hd, n, false);
      Tensor dvh({n, hd});
      gemm_tn(p.data(), dctx_h.data(), dvh.data(), n, n, hd, false);
      Tensor ds = softmax_backward(p, dp, 1);
      for (auto& v : ds.data()) v *= scale;
      Tensor dqh({n, hd}), dkh({n, hd});
      gemm_nn(ds.data(), kh.data(), dqh.data(), n, n, hd, false);
      gemm_tn(ds.data(), qh.data(), dkh.data(), n, n, hd, false);
      add_head_slice(dq, dqh, h, hd);
      add_head_slice(dk, dkh, h, hd);
      add_head_slice(dv, dvh, h, hd);
    }
    const Tensor& a = c.ln1.out;
    Tensor da = linear_backward(a, model.at(lp.wq), model.at(lp.bq), dq);
    add_inplace(da, linear_backward(a, model.at(lp.wk), model.at(lp.bk), dk));
    add_inplace(da, linear_backward(a, model.at(lp.wv), model.at(lp.bv), dv));
    LayerNormGrads g1 = layer_norm_backward(c.ln1, model.at(lp.ln1_gain).value, da);
    add_to_grad(model.at(lp.ln1_gain), g1.gain);
    add_to_grad(model.at(lp.ln1_bias), g1.bias);
    add_inplace(dx, g1.x);
  }

  multiply_inplace(dx, out.embed_drop);
  Tensor& tok = model.at(model.token_emb).grad;
  Tensor& typ = model.at(model.type_emb).grad;
  Tensor& p1 = model.at(model.pos1_emb).grad;
  Tensor& p2 = model.at(model.pos2_emb).grad;
  const InputSample& s = out.sample;
  for (std::size_t t = 0; t < n; ++t) {
    auto g = dx.row(t);
    auto a = tok.row(static_cast<std::size_t>(s.token_ids[t]));
    auto b = typ.row(static_cast<std::size_t>(s.type_ids[t]));
    auto c = p1.row(static_cast<std::size_t>(s.pos1[t]));
    auto e = p2.row(static_cast<std::size_t>(s.pos2[t]));
    for (std::size_t j = 0; j < d; ++j) {
      a[j] += g[j];
      b[j] += g[j];
      c[j] += g[j];
      e[j] += g[j];
    }
  }
}

Tensor mlm_logits(const Model& model, const Tensor& hidden, std::span<const std::size_t> positions) {
  if (positions.empty()) throw ContractViolation("mlm_logits needs at least one position");
  const std::size_t d = model.config().hidden;
  Tensor selected({positions.size(), d});
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (positions[k] >= hidden.rows()) throw ContractViolation("MLM position outside the sample");
    auto src = hidden.row(positions[k]);
    std::copy(src.begin(), src.end(), selected.row(k).begin());
  }
  return linear(selected, model.at(model.mlm_weight), model.at(model.mlm_bias));
}

Tensor mlm_log_probs(const Model& model, const EncoderOutput& output,
                     std::span<const std::size_t> positions) {
  return log_softmax(mlm_logits(model, output.hidden, positions));
}

Tensor mlm_head_backward(Model& model, const Tensor& hidden, std::span<const std::size_t> positions,
                         const Tensor& grad_logits) {
  const std::size_t d = model.config().hidden;
  Tensor selected({positions.size(), d});
  for (std::size_t k = 0; k < positions.size(); ++k) {
    auto src = hidden.row(positions[k]);
    std::copy(src.begin(), src.end(), selected.row(k).begin());
  }
  Tensor dsel = linear_backward(selected, model.at(model.mlm_weight), model.at(model.mlm_bias), grad_logits);
  Tensor grad_hidden(hidden.shape());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    auto dst = grad_hidden.row(positions[k]);
    auto src = dsel.row(k);
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  return grad_hidden;
}

Tensor pooled_embedding(const Tensor& hidden, std::span<const int> attention_mask) {
  if (attention_mask.size() != hidden.rows()) throw ContractViolation("attention mask length mismatch");
  Tensor pooled({hidden.cols()});
  std::size_t count = 0;
  for (std::size_t t = 0; t < hidden.rows(); ++t) {
    if (attention_mask[t] == 0) continue;
    ++count;
    auto row = hidden.row(t);
    for (std::size_t j = 0; j < hidden.cols(); ++j) pooled[j] += row[j];
  }
  if (count == 0) throw ContractViolation("cannot pool a sample with no real tokens");
  for (auto& v : pooled.data()) v /= static_cast<double>(count);
  return pooled;
}

Tensor classifier_logits(const Model& model, const Tensor& pooled) {
  if (!model.has_classifier()) throw ConfigError("model has no classifier head");
  Tensor row({1, pooled.size()}, std::vector<double>(pooled.data().begin(), pooled.data().end()));
  Tensor logits = linear(row, model.at(model.cls_weight), model.at(model.cls_bias));
  return Tensor({model.num_classes()}, std::vector<double>(logits.data().begin(), logits.data().end()));
}

Tensor classify_forward(const Model& model, const InputSample& sample) {
  if (!model.has_classifier()) throw ConfigError("model has no classifier head");
  EncoderOutput out = encoder_forward(model, sample, false);
  return log_softmax(classifier_logits(model, pooled_embedding(out.hidden, sample.attention_mask)));
}

std::uint64_t hash_parameters(std::span<const Parameter* const> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : params) {
    for (double v : p->value.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

std::uint64_t hash_model(const Model& model) {
  std::vector<const Parameter*> ptrs;
  for (const auto& p : model.parameters()) ptrs.push_back(&p);
  return hash_parameters(ptrs);
}

std::uint64_t hash_encoder(const Model& model) {
  std::vector<const Parameter*> ptrs;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    if (model.has_classifier() && (i == model.cls_weight || i == model.cls_bias)) continue;
    ptrs.push_back(&model.at(i));
  }
  return hash_parameters(ptrs);
}

}  // namespace entmlm
