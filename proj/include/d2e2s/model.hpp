#pragma once

// Full model assembly: dual-channel encoder, semantic attention graph,
// similarity-separation loss, feature interaction, fusion, span filtering,
// and pair sentiment classification — with ablation switches that rewire
// the graph instead of dead-weighting it.

#include <string>
#include <utility>
#include <vector>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"
#include "d2e2s/corpus.hpp"
#include "d2e2s/encoder.hpp"
#include "d2e2s/graphs.hpp"
#include "d2e2s/hfim.hpp"
#include "d2e2s/nn.hpp"
#include "d2e2s/separation.hpp"
#include "d2e2s/spans.hpp"
#include "d2e2s/tokenizer.hpp"
#include "d2e2s/triplet.hpp"

namespace d2e2s {

enum class Ablation {
  kFull,
  kWoSs,
  kWoSyn,
  kWoSem,
  kWoHfim,
  kE1Only,
  kE2Only,
  kBiaffine,
};

inline const std::vector<std::pair<std::string, Ablation>>& ablation_table() {
  static const std::vector<std::pair<std::string, Ablation>> table = {
      {"full", Ablation::kFull},       {"wo_ss", Ablation::kWoSs},
      {"wo_syn", Ablation::kWoSyn},    {"wo_sem", Ablation::kWoSem},
      {"wo_hfim", Ablation::kWoHfim},  {"e1_only", Ablation::kE1Only},
      {"e2_only", Ablation::kE2Only},  {"biaffine", Ablation::kBiaffine},
  };
  return table;
}

inline Ablation parse_ablation(const std::string& name) {
  for (const auto& [key, value] : ablation_table())
    if (key == name) return value;
  throw UnknownAblationError("unknown ablation: '" + name + "'");
}

inline std::string to_string(Ablation a) {
  for (const auto& [key, value] : ablation_table())
    if (value == a) return key;
  throw UnknownAblationError("unmapped ablation value");
}

struct ModelConfig {
  EncoderConfig encoder;
  int sem_attention_heads = 8;
  std::string sem_combine = "mean";
  int syn_sem_gcn_layers = 2;
  HfimConfig hfim;
  SeparationConfig separation;
  int fuse_out = 0;  // 0 -> encoder.hidden_bert
  SpanBudget spans;
  int span_width_dim = 25;
  int span_hidden = 128;
  int pair_width_dim = 25;
  int pair_hidden = 128;
  std::string ablation = "full";

  int fused_width() const {
    return fuse_out > 0 ? fuse_out : encoder.hidden_bert;
  }
  int span_repr_width() const {
    return fused_width() + span_width_dim + encoder.hidden_bert;
  }

  void validate() const {
    encoder.validate();
    spans.validate();
    separation.validate();
    hfim.validate();
    parse_ablation(ablation);
    if (sem_attention_heads <= 0 ||
        encoder.hidden_bert % sem_attention_heads != 0)
      throw ConfigError("sem_attention_heads must divide hidden_bert");
    if (syn_sem_gcn_layers < 1)
      throw ConfigError("syn_sem_gcn_layers must be >= 1");
    if (span_width_dim < 1 || span_hidden < 1 || pair_width_dim < 1 ||
        pair_hidden < 1)
      throw ConfigError("span/pair head dimensions must be >= 1");
    if (fuse_out < 0) throw ConfigError("fuse_out must be >= 0");
  }
};

// Per-sentence objective: span-filter loss + pair loss + alpha * separation
// term. An undefined l_kl (or alpha == 0) drops the separation term from the
// graph entirely rather than multiplying it by zero.
inline ag::Var total_loss(const ag::Var& l_sp, const ag::Var& l_tri,
                          const ag::Var& l_kl, double alpha) {
  auto check = [](const ag::Var& v, const char* what) {
    if (v.defined() && !v.value().allFinite())
      throw NonFiniteLossError(std::string(what) + " loss is non-finite (" +
                               std::to_string(v.value()(0, 0)) + ")");
  };
  check(l_sp, "span filter");
  check(l_tri, "pair classification");
  check(l_kl, "separation");
  ag::Var out = ag::add(l_sp, l_tri);
  if (l_kl.defined() && alpha != 0.0) out = ag::add(out, ag::scal(l_kl, alpha));
  return out;
}

struct SentenceResult {
  ag::Var loss;  // 1x1 total objective for this sentence
  double span_loss = 0.0;
  double triplet_loss = 0.0;
  double separation_loss = 0.0;
  int kept_targets = 0;   // spans surviving the filter per mention type
  int kept_opinions = 0;
  int scored_pairs = 0;   // candidate pairs fed to the relation classifier
  std::vector<Triplet> predictions;
};

class D2e2sModel {
 public:
  D2e2sModel(ModelConfig cfg, int vocab_size, unsigned long seed)
      : cfg_(std::move(cfg)), ablation_(parse_ablation(cfg_.ablation)) {
    cfg_.validate();
    Rng rng(seed);
    const int d_l = cfg_.encoder.d_lstm();
    const int d_b = cfg_.encoder.d_bert();

    ChannelMode mode = ChannelMode::Both;
    if (ablation_ == Ablation::kE1Only) mode = ChannelMode::E1Only;
    if (ablation_ == Ablation::kE2Only) mode = ChannelMode::E2Only;
    encoder_ = DualEncoder(reg_, cfg_.encoder, vocab_size, rng, mode);

    sem_attn_ = SemanticAttention(reg_, "sem_attn", d_b,
                                  cfg_.sem_attention_heads, rng,
                                  cfg_.sem_combine);

    use_separation_ = ablation_ != Ablation::kWoSs;
    use_hfim_ = ablation_ != Ablation::kWoHfim;
    if (use_hfim_) {
      HfimConfig h = cfg_.hfim;
      h.syn_branch = ablation_ != Ablation::kWoSyn;
      h.sem_branch = ablation_ != Ablation::kWoSem;
      if (ablation_ == Ablation::kBiaffine) h.interaction_mode = "biaffine";
      const int channel_layers =
          ablation_ == Ablation::kWoSs ? 0 : cfg_.syn_sem_gcn_layers;
      hfim_ = Hfim(reg_, "hfim", d_l, d_b, channel_layers, h, rng);
    }

    fuse_ = FeatureFusion(reg_, "fuse", d_l, d_b, cfg_.fused_width(), rng);
    spans_ = SpanExtractor(reg_, "span", cfg_.fused_width(), d_b,
                           cfg_.span_width_dim, cfg_.span_hidden, cfg_.spans,
                           rng);
    triplets_ = TripletClassifier(reg_, "tri", cfg_.span_repr_width(), d_b,
                                  cfg_.pair_width_dim, cfg_.pair_hidden, rng);
  }

  SentenceResult forward(const Sentence& s, const Tokenized& tok,
                         bool training, Rng& rng) {
    trace_.clear();
    const int n = s.word_count();

    ChannelStates st = encoder_.encode(tok, rng, training);
    switch (encoder_.mode()) {
      case ChannelMode::Both: trace_.push_back("encoder[both]"); break;
      case ChannelMode::E1Only: trace_.push_back("encoder[e1_only]"); break;
      case ChannelMode::E2Only: trace_.push_back("encoder[e2_only]"); break;
    }

    ag::Mat a_syn = build_syn_adjacency(s);
    ag::Var a_sem = sem_attn_.forward(st.h_bert);
    trace_.push_back("sem_attention");

    SentenceResult out;
    ag::Var l_kl;
    if (use_separation_) {
      l_kl = separation_loss(ag::constant(a_syn), a_sem,
                             cfg_.separation.epsilon);
      trace_.push_back("separation");
      out.separation_loss = l_kl.scalar();
    }

    ag::Var fused;
    if (use_hfim_) {
      InteractOutputs io =
          hfim_.interact(st.h_lstm, st.h_bert, a_syn, a_sem, &trace_);
      fused = fuse_.forward(io.lstm_syn, io.bert_sem);
    } else {
      fused = fuse_.forward(st.h_lstm, st.h_bert);
    }
    trace_.push_back("fuse");

    ScoredSpans scored = spans_.score(
        enumerate_spans(n, cfg_.spans.max_span_length), fused, st.cls);
    ag::Var l_sp = spans_.filter_loss(scored, s.gold_triplets);
    trace_.push_back("spans");
    out.span_loss = l_sp.scalar();

    Selection sel = select_candidates(scored, n, cfg_.spans);
    out.kept_targets = static_cast<int>(sel.targets.size());
    out.kept_opinions = static_cast<int>(sel.opinions.size());
    ScoredPairs pairs =
        triplets_.score(enumerate_pairs(scored, sel), scored, st.cls);
    out.scored_pairs = static_cast<int>(pairs.pairs.size());
    ag::Var l_tri = triplets_.loss(pairs, s.gold_triplets);
    trace_.push_back("triplets");
    out.triplet_loss = l_tri.scalar();
    out.predictions = decode(pairs);

    out.loss = total_loss(l_sp, l_tri, l_kl, cfg_.separation.alpha);
    return out;
  }

  // Inference-only convenience: decode triplets without loss bookkeeping.
  std::vector<Triplet> predict(const Sentence& s, const Tokenized& tok) {
    Rng rng(0);  // inference runs no dropout, so the seed is inert
    return forward(s, tok, /*training=*/false, rng).predictions;
  }

  nn::ParamRegistry& registry() { return reg_; }
  const nn::ParamRegistry& registry() const { return reg_; }
  const ModelConfig& config() const { return cfg_; }
  Ablation ablation() const { return ablation_; }
  const std::vector<std::string>& trace() const { return trace_; }

 private:
  ModelConfig cfg_;
  Ablation ablation_;
  nn::ParamRegistry reg_;
  DualEncoder encoder_;
  SemanticAttention sem_attn_;
  bool use_separation_ = true;
  bool use_hfim_ = true;
  Hfim hfim_;
  FeatureFusion fuse_;
  SpanExtractor spans_;
  TripletClassifier triplets_;
  std::vector<std::string> trace_;
};

}  // namespace d2e2s
