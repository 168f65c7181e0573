#include "entmlm/commands.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "entmlm/checkpoint.hpp"
#include "entmlm/corpus.hpp"
#include "entmlm/decoding.hpp"
#include "entmlm/errors.hpp"
#include "entmlm/evaluation.hpp"
#include "entmlm/run_config.hpp"
#include "entmlm/training.hpp"

namespace entmlm {

namespace {

namespace fs = std::filesystem;

struct Context {
  RunConfig cfg;
  fs::path out;
  std::uint64_t seed = 0;
  std::ostream& log;

  fs::path path(const std::string& key, const std::string& default_name) const {
    return fs::path(cfg.get_string(key, (out / default_name).string()));
  }
  fs::path required_path(const std::string& key) const {
    const std::string v = cfg.get_string(key, "");
    if (v.empty()) throw ConfigError("missing required key '" + key + "'");
    return v;
  }
};

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

ModelConfig read_model_config(const RunConfig& cfg, const ModelConfig& defaults) {
  ModelConfig m = defaults;
  m.num_layers = cfg.get_size("model.num_layers", m.num_layers);
  m.num_heads = cfg.get_size("model.num_heads", m.num_heads);
  m.hidden = cfg.get_size("model.hidden", m.hidden);
  m.ffn = cfg.get_size("model.ffn", m.ffn);
  m.max_pos1 = cfg.get_size("model.max_pos1", m.max_pos1);
  m.max_pos2 = cfg.get_size("model.max_pos2", m.max_pos2);
  m.dropout = cfg.get_double("model.dropout", m.dropout);
  m.init_std = cfg.get_double("model.init_std", m.init_std);
  return m;
}

MaskingConfig read_masking(const RunConfig& cfg, std::uint64_t seed) {
  MaskingConfig m;
  m.text_mask_rate = cfg.get_double("masking.text_rate", m.text_mask_rate);
  m.entity_mask_rate = cfg.get_double("masking.entity_rate", m.entity_mask_rate);
  m.geometric_p = cfg.get_double("masking.geometric_p", m.geometric_p);
  m.span_min = static_cast<int>(cfg.get_int("masking.span_min", m.span_min));
  m.span_max = static_cast<int>(cfg.get_int("masking.span_max", m.span_max));
  m.whole_entity_threshold = static_cast<int>(cfg.get_int("masking.whole_entity_threshold", m.whole_entity_threshold));
  m.mask_prob = cfg.get_double("masking.mask_prob", m.mask_prob);
  m.random_prob = cfg.get_double("masking.random_prob", m.random_prob);
  m.seed = seed;
  return m;
}

FinetuneConfig read_finetune(const RunConfig& cfg, std::uint64_t seed) {
  FinetuneConfig f;
  f.epochs = cfg.get_size("finetune.epochs", f.epochs);
  f.peak_lr = cfg.get_double("finetune.peak_lr", f.peak_lr);
  f.warmup_fraction = cfg.get_double("finetune.warmup_fraction", f.warmup_fraction);
  f.batch_size = cfg.get_size("finetune.batch_size", f.batch_size);
  f.weight_decay = cfg.get_double("finetune.weight_decay", f.weight_decay);
  f.seed = seed;
  f.validate();
  return f;
}

std::vector<LabeledSample> labeled_from_file(const fs::path& path, const Vocabulary& vocab,
                                             const FeatureSet& features, std::size_t max_len,
                                             bool include_abstract, std::uint64_t seed) {
  return make_labeled_samples(load_corpus(path), vocab, features, max_len, include_abstract, seed);
}

std::size_t class_count(const RunConfig& cfg, const std::vector<LabeledSample>& train) {
  int max_label = -1;
  for (const auto& s : train) max_label = std::max(max_label, s.label);
  const std::size_t n = cfg.get_size("classify.num_classes", static_cast<std::size_t>(max_label + 1));
  if (n < 2) throw ConfigError("need at least two classes");
  for (const auto& s : train) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= n) {
      throw ConfigError("label " + std::to_string(s.label) + " outside the class range");
    }
  }
  return n;
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(Context& c) {
  const std::size_t topics = c.cfg.get_size("corpus.topics", 20);
  const std::size_t per_topic = c.cfg.get_size("corpus.papers_per_topic", 200);
  const double noise = c.cfg.get_double("corpus.noise", 0.1);
  const std::size_t min_freq = c.cfg.get_size("vocab.min_frequency", 1);
  const std::size_t candidates = c.cfg.get_size("tasks.candidates", std::min<std::size_t>(19, topics));
  const std::size_t items_per_topic = c.cfg.get_size("tasks.items_per_topic", 10);
  const std::size_t cls_train = c.cfg.get_size("tasks.classify_train_per_topic", 20);
  const std::size_t cls_test = c.cfg.get_size("tasks.classify_test_per_topic", 10);
  const std::size_t blocks_valid = c.cfg.get_size("tasks.disambig_valid_blocks", 5);
  const std::size_t blocks_test = c.cfg.get_size("tasks.disambig_test_blocks", 10);
  const std::size_t persons = c.cfg.get_size("tasks.disambig_persons", std::min<std::size_t>(4, topics));
  const std::size_t papers_per_person = c.cfg.get_size("tasks.disambig_papers_per_person", 5);
  c.cfg.reject_unknown();

  GeneratorSpec spec = make_generator_spec(topics, per_topic, noise, c.seed);
  validate_spec(spec);
  const Corpus corpus = generate_corpus(spec);

  // Prompt words are part of the vocabulary even if the corpus never uses them.
  Corpus vocab_source = corpus;
  PaperRecord prompts;
  for (EntityType t : {EntityType::Fos, EntityType::Venue, EntityType::Affiliation}) {
    prompts.title += default_prompt(t) + " ";
  }
  for (std::size_t i = 0; i < min_freq; ++i) vocab_source.push_back(prompts);
  const Vocabulary vocab = Vocabulary::build(vocab_source, min_freq);

  fs::create_directories(c.out);
  save_corpus(corpus, c.out / "corpus.jsonl");
  vocab.save(c.out / "vocab.txt");
  for (EntityType t : {EntityType::Fos, EntityType::Venue, EntityType::Affiliation}) {
    save_inference_task(build_inference_task(spec, t, candidates, items_per_topic, c.seed),
                        c.out / (std::string("task_") + entity_type_name(t) + ".jsonl"));
  }
  save_corpus(held_out_papers(spec, cls_train, c.seed, "classify-train"), c.out / "classify_train.jsonl");
  save_corpus(held_out_papers(spec, cls_test, c.seed, "classify-test"), c.out / "classify_test.jsonl");
  const auto blocks = build_disambiguation_blocks(spec, blocks_valid + blocks_test, persons, papers_per_person, c.seed);
  save_blocks({blocks.begin(), blocks.begin() + static_cast<std::ptrdiff_t>(blocks_valid)}, c.out / "disambig_valid.jsonl");
  save_blocks({blocks.begin() + static_cast<std::ptrdiff_t>(blocks_valid), blocks.end()}, c.out / "disambig_test.jsonl");

  std::size_t authors = 0, fos = 0, venues = 0, affiliations = 0;
  for (const auto& r : corpus) {
    authors += r.authors.size();
    fos += r.fos.size();
    venues += r.venue.empty() ? 0 : 1;
    affiliations += r.affiliations.size();
  }
  c.log << "papers=" << corpus.size() << " author=" << authors << " fos=" << fos << " venue=" << venues
        << " affiliation=" << affiliations << " vocab=" << vocab.size() << "\n";
  return kExitOk;
}

int cmd_pretrain(Context& c) {
  PretrainConfig p;
  p.stage = static_cast<int>(c.cfg.get_int("pretrain.stage", 1));
  p.max_len = c.cfg.get_size("pretrain.max_len", p.stage == 1 ? 32 : 128);
  p.batch_size = c.cfg.get_size("pretrain.batch_size", p.batch_size);
  p.accumulation_steps = c.cfg.get_size("pretrain.accumulation_steps", p.accumulation_steps);
  p.steps = c.cfg.get_size("pretrain.steps", p.steps);
  p.peak_lr = c.cfg.get_double("pretrain.peak_lr", p.peak_lr);
  p.warmup_fraction = c.cfg.get_double("pretrain.warmup_fraction", p.warmup_fraction);
  p.weight_decay = c.cfg.get_double("pretrain.weight_decay", p.weight_decay);
  p.log_every = c.cfg.get_size("pretrain.log_every", p.log_every);
  p.include_abstract = c.cfg.get_bool("pretrain.include_abstract", p.include_abstract);
  p.seed = c.seed;
  p.masking = read_masking(c.cfg, c.seed);
  const fs::path corpus_path = c.path("corpus", "corpus.jsonl");
  const fs::path vocab_path = c.path("vocab", "vocab.txt");
  const std::string init = c.cfg.get_string("pretrain.init", "");
  const fs::path ckpt_out = c.path("pretrain.output", "stage" + std::to_string(p.stage) + ".ckpt");
  const fs::path loss_out = c.path("pretrain.loss_output", "loss_stage" + std::to_string(p.stage) + ".tsv");
  std::optional<Model> base;
  if (!init.empty()) base = load_checkpoint(init);
  ModelConfig defaults;
  if (base) defaults = base->config();
  ModelConfig mc = read_model_config(c.cfg, defaults);
  c.cfg.reject_unknown();
  p.validate();
  if (p.stage == 2 && init.empty()) throw ConfigError("stage 2 needs pretrain.init pointing at a stage-1 checkpoint");

  const Corpus corpus = load_corpus(corpus_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  mc.vocab_size = vocab.size();
  mc.seed = c.seed;
  if (base) {
    ModelConfig stored = base->config();
    stored.dropout = mc.dropout;
    mc.seed = stored.seed;
    if (!(stored == mc)) throw ConfigError("model settings differ from the initial checkpoint");
  }
  mc.validate();
  if (p.max_len > mc.max_pos2) throw ConfigError("pretrain.max_len exceeds model.max_pos2");

  Model model = base ? *base : Model(mc);
  if (base) {
    // Only dropout may change between stages.
    Model rebuilt(mc);
    for (std::size_t i = 0; i < rebuilt.parameters().size(); ++i) rebuilt.at(i).value = base->at(i).value;
    model = std::move(rebuilt);
  }
  c.log << "init_hash=" << hex(hash_model(model)) << "\n";
  const PretrainResult result = pretrain(corpus, vocab, model, p, [&](std::size_t step, double loss) {
    if (step % p.log_every == 0 || step == p.steps) c.log << "step " << step << " loss " << num(loss) << "\n";
  });
  fs::create_directories(ckpt_out.parent_path().empty() ? "." : ckpt_out.parent_path());
  save_checkpoint(model, ckpt_out);
  write_file_atomic(loss_out, loss_curve_tsv(result.curve));
  c.log << "final_hash=" << hex(hash_model(model)) << " final_loss=" << num(result.curve.back().loss) << "\n";
  return kExitOk;
}

int cmd_finetune(Context& c) {
  const fs::path ckpt = c.required_path("checkpoint");
  const fs::path vocab_path = c.path("vocab", "vocab.txt");
  const fs::path train_path = c.path("classify.train", "classify_train.jsonl");
  const std::string valid_path = c.cfg.get_string("classify.valid", "");
  const FeatureSet features = FeatureSet::parse(c.cfg.get_string("classify.features", "all"));
  const bool freeze = c.cfg.get_bool("finetune.freeze", false);
  const std::size_t max_len = c.cfg.get_size("classify.max_len", 128);
  const bool include_abstract = c.cfg.get_bool("classify.include_abstract", false);
  FinetuneConfig f = read_finetune(c.cfg, c.seed);
  f.freeze_encoder = freeze;
  const fs::path out = c.path("finetune.output", "finetuned.ckpt");
  const fs::path report = c.path("finetune.report", "finetune.tsv");

  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const auto train = labeled_from_file(train_path, vocab, features, max_len, include_abstract, c.seed);
  const std::size_t classes = class_count(c.cfg, train);
  c.cfg.reject_unknown();
  const auto valid = valid_path.empty()
                         ? std::vector<LabeledSample>{}
                         : labeled_from_file(valid_path, vocab, features, max_len, include_abstract, c.seed);

  Model model = load_checkpoint(ckpt);
  model.add_classifier(classes, derive_seed(c.seed, "classifier-init"));
  const std::uint64_t before = hash_encoder(model);
  const FinetuneResult r = finetune_classifier(model, train, valid, f);
  std::string tsv = "epoch\tval_accuracy\n";
  for (std::size_t e = 0; e < r.val_accuracy.size(); ++e) tsv += std::to_string(e + 1) + "\t" + num(r.val_accuracy[e]) + "\n";
  write_file_atomic(report, tsv);
  save_checkpoint(model, out);
  c.log << "encoder_unchanged=" << (before == hash_encoder(model) ? "true" : "false")
        << " final_loss=" << num(r.step_losses.back()) << "\n";
  return kExitOk;
}

int cmd_classify(Context& c) {
  const fs::path ckpt = c.required_path("checkpoint");
  const fs::path vocab_path = c.path("vocab", "vocab.txt");
  const fs::path train_path = c.path("classify.train", "classify_train.jsonl");
  const fs::path test_path = c.path("classify.test", "classify_test.jsonl");
  const auto feature_names = c.cfg.get_list("classify.features", {"title", "author", "venue", "aff", "fos", "all"});
  const auto modes = c.cfg.get_list("classify.modes", {"freeze", "finetune"});
  const std::size_t seeds = c.cfg.get_size("classify.seeds", 1);
  const std::size_t max_len = c.cfg.get_size("classify.max_len", 128);
  const bool include_abstract = c.cfg.get_bool("classify.include_abstract", false);
  const FinetuneConfig base_cfg = read_finetune(c.cfg, c.seed);
  const fs::path report = c.path("classify.report", "classify.tsv");
  const fs::path runs_report = c.path("classify.runs", "classify_runs.tsv");
  for (const auto& m : modes) {
    if (m != "freeze" && m != "finetune") throw ConfigError("unknown classify mode '" + m + "'");
  }
  if (seeds == 0) throw ConfigError("classify.seeds must be >= 1");
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const Model pretrained = load_checkpoint(ckpt);

  std::string tsv = "features\tmode\tmean_accuracy\tstd_accuracy\tseeds\tencoder_unchanged\n";
  std::string runs = "features\tmode\tseed\taccuracy\n";
  bool first = true;
  for (const auto& name : feature_names) {
    const FeatureSet features = FeatureSet::parse(name);
    const auto train = labeled_from_file(train_path, vocab, features, max_len, include_abstract, c.seed);
    const auto test = labeled_from_file(test_path, vocab, features, max_len, include_abstract, c.seed);
    const std::size_t classes = class_count(c.cfg, train);
    if (first) c.cfg.reject_unknown();
    first = false;
    for (const auto& t : test) {
      if (t.label < 0 || static_cast<std::size_t>(t.label) >= classes) throw ConfigError("test label outside the class range");
    }
    for (const auto& mode : modes) {
      std::vector<double> accs;
      bool unchanged = true;
      for (std::size_t k = 0; k < seeds; ++k) {
        const std::uint64_t run_seed = c.seed + k;
        Model model = pretrained;
        model.add_classifier(classes, derive_seed(run_seed, "classifier-init"));
        FinetuneConfig f = base_cfg;
        f.seed = run_seed;
        f.freeze_encoder = mode == "freeze";
        const std::uint64_t before = hash_encoder(model);
        finetune_classifier(model, train, {}, f);
        if (f.freeze_encoder && hash_encoder(model) != before) unchanged = false;
        accs.push_back(evaluate_classifier(model, test));
        runs += name + "\t" + mode + "\t" + std::to_string(run_seed) + "\t" + num(accs.back()) + "\n";
      }
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      const double sd = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
      tsv += name + "\t" + mode + "\t" + num(mean) + "\t" + num(sd) + "\t" + std::to_string(seeds) + "\t" +
             (mode == "freeze" ? (unchanged ? "true" : "false") : "n/a") + "\n";
      c.log << name << " " << mode << " accuracy " << num(mean) << "\n";
    }
  }
  write_file_atomic(runs_report, runs);
  write_file_atomic(report, tsv);
  return kExitOk;
}

int cmd_infer(Context& c) {
  const fs::path ckpt = c.required_path("checkpoint");
  const fs::path vocab_path = c.path("vocab", "vocab.txt");
  const EntityType type = parse_entity_type(c.cfg.get_string("infer.entity_type", "fos"));
  const fs::path task_path = c.path("infer.task", std::string("task_") + entity_type_name(type) + ".jsonl");
  const auto settings = c.cfg.get_list("infer.settings", {"plain", "+prompt", "+abstract", "+both"});
  const DecodeOrder order = parse_decode_order(c.cfg.get_string("decode.order", "out-of-order"));
  const double alpha = c.cfg.get_double("decode.alpha", 0.0);
  const std::size_t max_len = c.cfg.get_size("infer.max_len", 128);
  const fs::path report = c.path("infer.report", "infer.tsv");
  c.cfg.reject_unknown();

  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const Model model = load_checkpoint(ckpt);
  const InferenceTask task = load_inference_task(task_path, type);
  task.validate();
  std::string tsv = "task\tsetting\thit_at_1\tmrr\tevaluated\tskipped\n";
  for (const auto& name : settings) {
    ZeroShotSettings s = parse_setting(name);
    s.order = order;
    s.alpha = alpha;
    s.max_len = max_len;
    const ZeroShotResult r = evaluate_zero_shot(task, model, vocab, s);
    tsv += std::string(entity_type_name(type)) + "\t" + setting_name(s) + "\t" + num(r.hit_at_1) + "\t" + num(r.mrr) +
           "\t" + std::to_string(r.evaluated) + "\t" + std::to_string(r.skipped) + "\n";
    std::string dump;
    for (const auto& ranking : r.rankings) {
      const InferenceItem& item = task.items[ranking.item];
      const auto gold = vocab.tokenize(item.candidates[item.gold_index]);
      const InputSample q = build_masked_query(make_query(item.record, type, s), gold.size(), vocab, model.config());
      std::vector<std::string> query_tokens;
      for (TokenId id : q.token_ids) query_tokens.push_back(vocab.token(id));
      nlohmann::json j{{"item", ranking.item},       {"setting", setting_name(s)}, {"query", query_tokens},
                       {"order", ranking.order},     {"scores", ranking.scores},   {"gold_index", item.gold_index},
                       {"gold_rank", ranking.gold_rank}};
      dump += j.dump() + "\n";
    }
    std::string file = "rankings_" + setting_name(s) + ".jsonl";
    if (file[9] == '+') file.erase(9, 1);
    write_file_atomic(c.out / file, dump);
    if (r.skipped > 0) c.log << "warning: " << r.skipped << " items skipped (candidate outside the vocabulary)\n";
    c.log << setting_name(s) << " hit@1=" << num(r.hit_at_1) << " mrr=" << num(r.mrr) << "\n";
  }
  write_file_atomic(report, tsv);
  return kExitOk;
}

int cmd_generate(Context& c) {
  const fs::path ckpt = c.required_path("checkpoint");
  const fs::path vocab_path = c.path("vocab", "vocab.txt");
  DecodeQuery q;
  q.title = c.cfg.get_string("generate.title", "");
  q.abstract = c.cfg.get_string("generate.abstract", "");
  q.target = parse_entity_type(c.cfg.get_string("generate.entity_type", "fos"));
  q.prompt = c.cfg.get_bool("generate.use_prompt", false) ? default_prompt(q.target) : "";
  q.prompt = c.cfg.get_string("generate.prompt", q.prompt);
  const auto [lo, hi] = default_length_range(q.target);
  q.min_length = c.cfg.get_size("generate.min_length", lo);
  q.max_length = c.cfg.get_size("generate.max_length", hi);
  q.beam_width = c.cfg.get_size("decode.beam_width", 16);
  q.top_k = c.cfg.get_size("decode.top_k", 10);
  q.alpha = c.cfg.get_double("decode.alpha", 0.0);
  q.order = parse_decode_order(c.cfg.get_string("decode.order", "out-of-order"));
  const fs::path out = c.path("generate.output", "generate.jsonl");
  c.cfg.reject_unknown();
  if (q.title.empty()) throw ConfigError("missing required key 'generate.title'");
  q.validate();

  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const Model model = load_checkpoint(ckpt);
  std::string dump;
  for (const auto& cand : generate(model, vocab, q)) {
    dump += candidate_to_json(cand, vocab) + "\n";
    std::string text;
    for (TokenId t : cand.tokens) text += (text.empty() ? "" : " ") + vocab.token(t);
    c.log << num(cand.normalized) << "\t" << text << "\n";
  }
  write_file_atomic(out, dump);
  return kExitOk;
}

int cmd_disambiguate(Context& c) {
  const fs::path ckpt = c.required_path("checkpoint");
  const fs::path vocab_path = c.path("vocab", "vocab.txt");
  const fs::path valid_path = c.path("disambiguate.valid", "disambig_valid.jsonl");
  const fs::path test_path = c.path("disambiguate.test", "disambig_test.jsonl");
  const FeatureSet features = FeatureSet::parse(c.cfg.get_string("disambiguate.features", "fos+venue"));
  const std::size_t max_len = c.cfg.get_size("disambiguate.max_len", 128);
  std::vector<double> thresholds = default_thresholds();
  if (c.cfg.has("disambiguate.thresholds")) {
    thresholds.clear();
    for (const auto& t : c.cfg.get_list("disambiguate.thresholds", {})) {
      RunConfig one = RunConfig::parse("t = " + t);
      thresholds.push_back(one.get_double("t", 0.0));
    }
  }
  const fs::path report = c.path("disambiguate.report", "disambiguate.tsv");
  const fs::path curve = c.path("disambiguate.curve", "thresholds.tsv");
  c.cfg.reject_unknown();

  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const Model model = load_checkpoint(ckpt);
  const ClusterResult r = run_disambiguation(load_blocks(valid_path), load_blocks(test_path),
                                             model_embedder(model, vocab, features, max_len), thresholds);
  std::string tsv = "block\tprecision\trecall\tf1\n";
  double p = 0.0, rc = 0.0;
  for (const auto& b : r.blocks) {
    tsv += b.name + "\t" + num(b.scores.precision) + "\t" + num(b.scores.recall) + "\t" + num(b.scores.f1) + "\n";
    p += b.scores.precision;
    rc += b.scores.recall;
  }
  const auto n = static_cast<double>(r.blocks.size());
  tsv += "macro\t" + num(p / n) + "\t" + num(rc / n) + "\t" + num(r.macro_f1) + "\n";
  std::string curve_tsv = "threshold\tvalidation_macro_f1\n";
  for (const auto& [t, f] : r.validation_curve) curve_tsv += num(t) + "\t" + num(f) + "\n";
  write_file_atomic(report, tsv);
  write_file_atomic(curve, curve_tsv);
  c.log << "threshold=" << num(r.threshold) << " macro_f1=" << num(r.macro_f1) << "\n";
  return kExitOk;
}

int cmd_gradcheck(Context& c) {
  ModelConfig defaults;
  defaults.num_layers = 2;
  defaults.num_heads = 2;
  defaults.hidden = 16;
  defaults.ffn = 32;
  ModelConfig mc = read_model_config(c.cfg, defaults);
  mc.vocab_size = c.cfg.get_size("model.vocab_size", 50);
  mc.seed = c.seed;
  GradCheckOptions opt;
  opt.samples = c.cfg.get_size("gradcheck.samples", opt.samples);
  opt.step = c.cfg.get_double("gradcheck.step", opt.step);
  opt.tolerance = c.cfg.get_double("gradcheck.tolerance", opt.tolerance);
  opt.seed = c.seed;
  const fs::path report = c.path("gradcheck.report", "gradcheck.tsv");
  c.cfg.reject_unknown();
  mc.validate();

  Model model(mc);
  Rng rng = make_rng(c.seed, "gradcheck-sample");
  const MlmExample ex = random_mlm_example(mc.vocab_size, rng);
  const GradCheckReport r = check_mlm_gradients(model, ex, opt);
  std::ostringstream tsv;
  tsv << std::setprecision(12) << "param\tindex\tanalytic\tnumeric\trel_error\n";
  for (const auto& e : r.entries) {
    tsv << e.param << '\t' << e.index << '\t' << e.analytic << '\t' << e.numeric << '\t' << e.rel_error << '\n';
  }
  write_file_atomic(report, tsv.str());
  c.log << "coordinates=" << r.entries.size() << " max_rel_error=" << num(r.max_rel_error)
        << " passed=" << (r.passed ? "true" : "false") << "\n";
  if (!r.diagnostic.empty()) c.log << r.diagnostic << "\n";
  return r.passed ? kExitOk : kExitNumerical;
}

const std::map<std::string, std::function<int(Context&)>>& registry() {
  static const std::map<std::string, std::function<int(Context&)>> commands{
      {"gen-corpus", cmd_gen_corpus}, {"pretrain", cmd_pretrain},   {"finetune", cmd_finetune},
      {"infer", cmd_infer},           {"generate", cmd_generate},   {"classify", cmd_classify},
      {"disambiguate", cmd_disambiguate}, {"gradcheck", cmd_gradcheck}};
  return commands;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen-corpus", "pretrain", "finetune", "infer",
                                              "generate",   "classify", "disambiguate", "gradcheck"};
  return names;
}

int run_command(const std::string& name, const CommandOptions& options, std::ostream& log) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw ConfigError("unknown command '" + name + "'");
  Context c{options.config ? RunConfig::load(*options.config) : RunConfig{}, options.out, 0, log};
  for (const auto& kv : options.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    const auto trim = [](std::string v) {
      v.erase(0, v.find_first_not_of(" \t"));
      v.erase(v.find_last_not_of(" \t") + 1);
      return v;
    };
    c.cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (options.seed) c.cfg.set("seed", std::to_string(*options.seed));
  c.seed = c.cfg.get_u64("seed", 0);
  fs::create_directories(c.out);
  return it->second(c);
}

int run_command_guarded(const std::string& name, const CommandOptions& options, std::ostream& log,
                        std::ostream& err) {
  try {
    return run_command(name, options, log);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
  } catch (const InvalidRecord& e) {
    err << "input error: " << e.what() << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
  }
  return kExitConfig;
}

}  // namespace entmlm
