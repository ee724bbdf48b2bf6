#pragma once

// Training loop: run configuration with strict JSON round-tripping, AdamW
// with decoupled weight decay, linear warmup/decay schedule, per-epoch dev
// evaluation, best-dev checkpointing, and a JSONL metrics log.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2e2s/common.hpp"
#include "d2e2s/corpus.hpp"
#include "d2e2s/evaluation.hpp"
#include "d2e2s/io.hpp"
#include "d2e2s/model.hpp"
#include "d2e2s/nn.hpp"
#include "d2e2s/tokenizer.hpp"

namespace d2e2s {

// ---------------------------------------------------------------------------
// Run configuration.

struct RunConfig {
  ModelConfig model;
  double learning_rate = 5e-5;
  double weight_decay = 1e-2;
  double warmup_fraction = 0.1;  // share of total steps spent warming up
  int epochs = 120;
  int batch_size = 16;
  int max_steps = 0;  // 0 = unlimited; otherwise stop after this many steps
  unsigned long seed = 42;
  std::string run_name = "run";

  void validate() const {
    model.validate();
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
      throw ConfigError("warmup_fraction must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (run_name.empty() ||
        run_name.find_first_of("/\\") != std::string::npos)
      throw ConfigError("run_name must be a non-empty path component");
  }
};

// ---------------------------------------------------------------------------
// JSON round trip. Unknown keys are hard errors so that typos in config files
// cannot silently fall back to defaults.

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object())
    throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) known = true;
    if (!known)
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out,
                const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where +
                      ": " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"backbone", c.backbone},
          {"hidden_bert", c.hidden_bert},
          {"hidden_lstm_half", c.hidden_lstm_half},
          {"dropout", c.dropout},
          {"backbone_dropout", c.backbone_dropout},
          {"self_attention_heads", c.self_attention_heads},
          {"backbone_layers", c.backbone_layers},
          {"backbone_heads", c.backbone_heads},
          {"backbone_ff", c.backbone_ff},
          {"max_positions", c.max_positions},
          {"subtoken_pooling", c.subtoken_pooling},
          {"backbone_weights", c.backbone_weights}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  const std::string where = "encoder config";
  detail::check_keys(j,
                     {"backbone", "hidden_bert", "hidden_lstm_half", "dropout",
                      "backbone_dropout", "self_attention_heads",
                      "backbone_layers", "backbone_heads", "backbone_ff",
                      "max_positions", "subtoken_pooling", "backbone_weights"},
                     where);
  EncoderConfig c;
  detail::read_field(j, "backbone", c.backbone, where);
  detail::read_field(j, "hidden_bert", c.hidden_bert, where);
  detail::read_field(j, "hidden_lstm_half", c.hidden_lstm_half, where);
  detail::read_field(j, "dropout", c.dropout, where);
  detail::read_field(j, "backbone_dropout", c.backbone_dropout, where);
  detail::read_field(j, "self_attention_heads", c.self_attention_heads, where);
  detail::read_field(j, "backbone_layers", c.backbone_layers, where);
  detail::read_field(j, "backbone_heads", c.backbone_heads, where);
  detail::read_field(j, "backbone_ff", c.backbone_ff, where);
  detail::read_field(j, "max_positions", c.max_positions, where);
  detail::read_field(j, "subtoken_pooling", c.subtoken_pooling, where);
  detail::read_field(j, "backbone_weights", c.backbone_weights, where);
  return c;
}

inline nlohmann::json to_json(const HfimConfig& c) {
  return {{"gcnconv_layers", c.gcnconv_layers},
          {"gatedconv_layers", c.gatedconv_layers},
          {"sadpool_layers", c.sadpool_layers},
          {"sparsify_threshold", c.sparsify_threshold},
          {"interaction_mode", c.interaction_mode}};
}

inline HfimConfig hfim_config_from_json(const nlohmann::json& j) {
  const std::string where = "hfim config";
  detail::check_keys(j,
                     {"gcnconv_layers", "gatedconv_layers", "sadpool_layers",
                      "sparsify_threshold", "interaction_mode"},
                     where);
  HfimConfig c;
  detail::read_field(j, "gcnconv_layers", c.gcnconv_layers, where);
  detail::read_field(j, "gatedconv_layers", c.gatedconv_layers, where);
  detail::read_field(j, "sadpool_layers", c.sadpool_layers, where);
  detail::read_field(j, "sparsify_threshold", c.sparsify_threshold, where);
  detail::read_field(j, "interaction_mode", c.interaction_mode, where);
  return c;
}

inline nlohmann::json to_json(const SeparationConfig& c) {
  return {{"alpha", c.alpha}, {"epsilon", c.epsilon}};
}

inline SeparationConfig separation_config_from_json(const nlohmann::json& j) {
  const std::string where = "separation config";
  detail::check_keys(j, {"alpha", "epsilon"}, where);
  SeparationConfig c;
  detail::read_field(j, "alpha", c.alpha, where);
  detail::read_field(j, "epsilon", c.epsilon, where);
  return c;
}

inline nlohmann::json to_json(const SpanBudget& c) {
  return {{"max_span_length", c.max_span_length},
          {"keep_ratio", c.keep_ratio}};
}

inline SpanBudget span_budget_from_json(const nlohmann::json& j) {
  const std::string where = "span budget";
  detail::check_keys(j, {"max_span_length", "keep_ratio"}, where);
  SpanBudget c;
  detail::read_field(j, "max_span_length", c.max_span_length, where);
  detail::read_field(j, "keep_ratio", c.keep_ratio, where);
  return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"sem_attention_heads", c.sem_attention_heads},
          {"sem_combine", c.sem_combine},
          {"syn_sem_gcn_layers", c.syn_sem_gcn_layers},
          {"hfim", to_json(c.hfim)},
          {"separation", to_json(c.separation)},
          {"fuse_out", c.fuse_out},
          {"spans", to_json(c.spans)},
          {"span_width_dim", c.span_width_dim},
          {"span_hidden", c.span_hidden},
          {"pair_width_dim", c.pair_width_dim},
          {"pair_hidden", c.pair_hidden},
          {"ablation", c.ablation}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  const std::string where = "model config";
  detail::check_keys(
      j, {"encoder", "sem_attention_heads", "sem_combine", "syn_sem_gcn_layers",
          "hfim", "separation", "fuse_out", "spans", "span_width_dim",
          "span_hidden", "pair_width_dim", "pair_hidden", "ablation"},
      where);
  ModelConfig c;
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
  if (j.contains("hfim")) c.hfim = hfim_config_from_json(j.at("hfim"));
  if (j.contains("separation"))
    c.separation = separation_config_from_json(j.at("separation"));
  if (j.contains("spans")) c.spans = span_budget_from_json(j.at("spans"));
  detail::read_field(j, "sem_attention_heads", c.sem_attention_heads, where);
  detail::read_field(j, "sem_combine", c.sem_combine, where);
  detail::read_field(j, "syn_sem_gcn_layers", c.syn_sem_gcn_layers, where);
  detail::read_field(j, "fuse_out", c.fuse_out, where);
  detail::read_field(j, "span_width_dim", c.span_width_dim, where);
  detail::read_field(j, "span_hidden", c.span_hidden, where);
  detail::read_field(j, "pair_width_dim", c.pair_width_dim, where);
  detail::read_field(j, "pair_hidden", c.pair_hidden, where);
  detail::read_field(j, "ablation", c.ablation, where);
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"warmup_fraction", c.warmup_fraction},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"run_name", c.run_name}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  const std::string where = "run config";
  detail::check_keys(j,
                     {"model", "learning_rate", "weight_decay",
                      "warmup_fraction", "epochs", "batch_size", "max_steps",
                      "seed", "run_name"},
                     where);
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  detail::read_field(j, "learning_rate", c.learning_rate, where);
  detail::read_field(j, "weight_decay", c.weight_decay, where);
  detail::read_field(j, "warmup_fraction", c.warmup_fraction, where);
  detail::read_field(j, "epochs", c.epochs, where);
  detail::read_field(j, "batch_size", c.batch_size, where);
  detail::read_field(j, "max_steps", c.max_steps, where);
  detail::read_field(j, "seed", c.seed, where);
  detail::read_field(j, "run_name", c.run_name, where);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NoDataFoundError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay: the decay is applied directly to the
// weights, scaled by the current learning rate, outside the moment estimates.

class AdamW {
 public:
  AdamW(nn::ParamRegistry& reg, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : reg_(&reg),
        lr_(lr),
        wd_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    for (const auto& [name, v] : reg.entries()) {
      m_.push_back(ag::Mat::Zero(v.value().rows(), v.value().cols()));
      s_.push_back(ag::Mat::Zero(v.value().rows(), v.value().cols()));
    }
  }

  // One update from the currently accumulated gradients. lr_scale multiplies
  // the base learning rate (the warmup/decay schedule hook).
  void step(double lr_scale = 1.0) {
    ++t_;
    const double lr = lr_ * lr_scale;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    std::size_t k = 0;
    for (auto [name, v] : reg_->entries()) {
      const ag::Mat& g = v.grad();
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
      s_[k] =
          (beta2_ * s_[k].array() + (1.0 - beta2_) * g.array().square()).matrix();
      ag::Mat& w = v.mutable_value();
      w.array() -=
          lr * (m_[k].array() / bc1) / ((s_[k].array() / bc2).sqrt() + eps_);
      if (wd_ != 0.0) w.array() -= lr * wd_ * w.array();
      ++k;
    }
  }

  long steps_taken() const { return t_; }

 private:
  nn::ParamRegistry* reg_;
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<ag::Mat> m_, s_;
};

// Linear warmup over the first warmup_fraction of total steps, then linear
// decay toward zero. `step` is the 0-based index of the upcoming step.
inline double lr_scale(int step, int total_steps, double warmup_fraction) {
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (step < 0 || step >= total_steps)
    throw ConfigError("step out of range for schedule");
  const int warmup = std::max(
      1, static_cast<int>(std::floor(warmup_fraction * total_steps)));
  if (step < warmup)
    return static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps == warmup) return 1.0;
  return static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

// ---------------------------------------------------------------------------
// Checkpoints: a tensor archive holding every parameter plus the resolved run
// config and vocabulary in the metadata blob.

inline void save_checkpoint(const std::filesystem::path& path,
                            const D2e2sModel& model, const RunConfig& cfg,
                            const Vocab& vocab,
                            nlohmann::json extra = nlohmann::json::object()) {
  TensorArchive a;
  a.meta = {{"config", to_json(cfg)}, {"vocab", vocab.tokens()}};
  for (auto& [key, value] : extra.items()) a.meta[key] = value;
  save_parameters(model.registry(), a);
  a.save(path);
}

struct LoadedCheckpoint {
  RunConfig config;
  std::unique_ptr<Vocab> vocab;
  std::unique_ptr<D2e2sModel> model;
  nlohmann::json meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  TensorArchive a = TensorArchive::load(path);
  if (!a.meta.contains("config") || !a.meta.contains("vocab"))
    throw CheckpointVersionMismatchError(path.string() +
                                         " lacks config/vocab metadata");
  LoadedCheckpoint lc;
  lc.meta = a.meta;
  lc.config = run_config_from_json(a.meta.at("config"));
  std::vector<std::string> tokens;
  try {
    tokens = a.meta.at("vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointVersionMismatchError("bad vocab metadata: " +
                                         std::string(e.what()));
  }
  lc.vocab = std::make_unique<Vocab>(std::move(tokens));
  lc.model = std::make_unique<D2e2sModel>(lc.config.model, lc.vocab->size(),
                                          lc.config.seed);
  load_parameters(lc.model->registry(), a);
  return lc;
}

// ---------------------------------------------------------------------------
// Evaluation helper shared by the trainer and the CLI: decode predictions for
// a split and score them against gold.

inline EvalReport evaluate_split(D2e2sModel& model, const Vocab& vocab,
                                 const std::vector<Sentence>& split,
                                 TokenizerKind kind) {
  std::vector<std::vector<Triplet>> predicted, gold;
  predicted.reserve(split.size());
  gold.reserve(split.size());
  for (const Sentence& s : split) {
    Tokenized tok = tokenize_sentence(vocab, s, kind);
    predicted.push_back(model.predict(s, tok));
    gold.push_back(s.gold_triplets);
  }
  return score(predicted, gold);
}

// ---------------------------------------------------------------------------
// Trainer.

struct EpochRecord {
  int epoch = 0;          // 1-based
  int steps = 0;          // cumulative optimizer steps
  double train_loss = 0;  // mean per-sentence objective over the epoch
  double dev_precision = 0;
  double dev_recall = 0;
  double dev_f1 = 0;
  double seconds = 0;
  bool best = false;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},           {"steps", steps},
            {"train_loss", train_loss}, {"dev_precision", dev_precision},
            {"dev_recall", dev_recall}, {"dev_f1", dev_f1},
            {"seconds", seconds},       {"best", best}};
  }
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;  // per-step mean batch loss, in step order
  double best_dev_f1 = 0.0;
  int best_epoch = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};

class Trainer {
 public:
  Trainer(RunConfig cfg, std::vector<Sentence> train, std::vector<Sentence> dev,
          std::filesystem::path out_dir)
      : cfg_(std::move(cfg)),
        train_(std::move(train)),
        dev_(std::move(dev)),
        out_dir_(std::move(out_dir)) {
    cfg_.validate();
    if (train_.empty()) throw NoDataFoundError("training split is empty");
    kind_ = cfg_.model.encoder.backbone == "toy" ? TokenizerKind::Toy
                                                 : TokenizerKind::WordPiece;
  }

  // Called after each epoch's record is finalized; empty by default.
  std::function<void(const EpochRecord&)> on_epoch;

  // Picks the vocabulary for the run: the toy backbone builds one from the
  // training split, the pretrained backbone loads a WordPiece file that must
  // sit next to the backbone weights ("<weights>.vocab").
  static Vocab make_vocab(const RunConfig& cfg,
                          const std::vector<Sentence>& train) {
    if (cfg.model.encoder.backbone == "toy") return Vocab::build_toy(train);
    return Vocab::load_wordpiece(cfg.model.encoder.backbone_weights + ".vocab");
  }

  TrainResult run() {
    const std::filesystem::path run_dir = out_dir_ / cfg_.run_name;
    std::filesystem::create_directories(run_dir);

    Vocab vocab = make_vocab(cfg_, train_);
    D2e2sModel model(cfg_.model, vocab.size(), cfg_.seed);
    if (cfg_.model.encoder.backbone == "pretrained") {
      TensorArchive weights =
          TensorArchive::load(cfg_.model.encoder.backbone_weights);
      load_parameters(model.registry(), weights, "backbone.");
    }

    std::vector<Tokenized> toks;
    toks.reserve(train_.size());
    for (const Sentence& s : train_)
      toks.push_back(tokenize_sentence(vocab, s, kind_));

    const int steps_per_epoch = static_cast<int>(
        (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size);
    int total_steps = cfg_.epochs * steps_per_epoch;
    if (cfg_.max_steps > 0) total_steps = std::min(total_steps, cfg_.max_steps);

    AdamW opt(model.registry(), cfg_.learning_rate, cfg_.weight_decay);
    Rng dropout_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainResult result;
    result.checkpoint = run_dir / "best.ckpt";
    result.metrics = run_dir / "metrics.jsonl";
    std::ofstream metrics(result.metrics, std::ios::trunc);
    if (!metrics)
      throw Error("cannot write " + result.metrics.string());

    int step = 0;
    bool have_best = false;
    for (int epoch = 1; epoch <= cfg_.epochs && step < total_steps; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      double loss_sum = 0.0;
      long loss_count = 0;

      std::vector<Batch> batches = make_batches(
          train_, cfg_.batch_size, cfg_.seed + static_cast<unsigned>(epoch));
      for (const Batch& b : batches) {
        if (step >= total_steps) break;
        try {
          model.registry().zero_grad();
          ag::Var batch_sum;
          for (int id : b.sentence_ids) {
            SentenceResult r =
                model.forward(train_[id], toks[id], true, dropout_rng);
            batch_sum =
                batch_sum.defined() ? ag::add(batch_sum, r.loss) : r.loss;
          }
          ag::Var batch_loss = ag::scal(
              batch_sum, 1.0 / static_cast<double>(b.sentence_ids.size()));
          if (!batch_loss.value().allFinite())
            throw NonFiniteLossError("batch loss is non-finite");
          batch_loss.backward();
          opt.step(lr_scale(step, total_steps, cfg_.warmup_fraction));
          result.step_losses.push_back(batch_loss.scalar());
          loss_sum += batch_loss.scalar() *
                      static_cast<double>(b.sentence_ids.size());
          loss_count += static_cast<long>(b.sentence_ids.size());
          ++step;
        } catch (const NonFiniteLossError& e) {
          throw NonFiniteLossError(
              "epoch " + std::to_string(epoch) + ", step " +
              std::to_string(step) + ": " + e.what() +
              " — try a lower learning_rate or a different seed");
        } catch (const std::bad_alloc&) {
          throw OutOfMemoryError(
              "allocation failed in epoch " + std::to_string(epoch) +
              ", step " + std::to_string(step) +
              " — reduce batch_size (currently " +
              std::to_string(cfg_.batch_size) + ") or the model dimensions");
        }
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.steps = step;
      rec.train_loss =
          loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;

      const std::vector<Sentence>& eval_split = dev_.empty() ? train_ : dev_;
      EvalReport report;
      try {
        report = evaluate_split(model, vocab, eval_split, kind_);
      } catch (const NonFiniteLossError& e) {
        throw NonFiniteLossError(
            "evaluation after epoch " + std::to_string(epoch) + " (step " +
            std::to_string(step) + "): " + e.what() +
            " — try a lower learning_rate or a different seed");
      }
      rec.dev_precision = report.overall.precision;
      rec.dev_recall = report.overall.recall;
      rec.dev_f1 = report.overall.f1;

      if (!have_best || rec.dev_f1 > result.best_dev_f1) {
        have_best = true;
        rec.best = true;
        result.best_dev_f1 = rec.dev_f1;
        result.best_epoch = epoch;
        save_checkpoint(result.checkpoint, model, cfg_, vocab,
                        {{"epoch", epoch}, {"dev_f1", rec.dev_f1}});
      }

      rec.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      metrics << rec.to_json().dump() << "\n";
      metrics.flush();
      if (on_epoch) on_epoch(rec);
      result.epochs.push_back(rec);
    }
    return result;
  }

 private:
  RunConfig cfg_;
  std::vector<Sentence> train_, dev_;
  std::filesystem::path out_dir_;
  TokenizerKind kind_ = TokenizerKind::Toy;
};

}  // namespace d2e2s
