#pragma once

// Dual-channel sentence encoder: a transformer backbone produces subtoken
// features; channel one is the word-aligned backbone output, channel two runs
// a BiLSTM plus one residual self-attention layer over the same word-aligned
// features.

#include <string>
#include <utility>
#include <vector>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"
#include "d2e2s/nn.hpp"
#include "d2e2s/tokenizer.hpp"

namespace d2e2s {

struct EncoderConfig {
  std::string backbone = "toy";  // toy | pretrained
  int hidden_bert = 768;
  int hidden_lstm_half = 384;
  double dropout = 0.5;           // applied to each channel output
  double backbone_dropout = 0.1;  // applied inside transformer blocks
  int self_attention_heads = 8;
  int backbone_layers = 2;
  int backbone_heads = 4;
  int backbone_ff = 0;  // 0 means 4 * hidden_bert
  int max_positions = 512;
  std::string subtoken_pooling = "first";  // first | mean
  std::string backbone_weights;            // archive path for pretrained

  int d_bert() const { return hidden_bert; }
  int d_lstm() const { return 2 * hidden_lstm_half; }
  int ff_width() const { return backbone_ff > 0 ? backbone_ff : 4 * hidden_bert; }

  void validate() const {
    if (backbone != "toy" && backbone != "pretrained")
      throw ConfigError("backbone must be 'toy' or 'pretrained', got " +
                        backbone);
    if (hidden_bert <= 0) throw ConfigError("hidden_bert must be positive");
    if (hidden_lstm_half <= 0)
      throw ConfigError("hidden_lstm_half must be positive");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("dropout must lie in [0, 1)");
    if (backbone_dropout < 0.0 || backbone_dropout >= 1.0)
      throw ConfigError("backbone_dropout must lie in [0, 1)");
    if (self_attention_heads <= 0 ||
        d_lstm() % self_attention_heads != 0)
      throw ConfigError("self_attention_heads must divide 2*hidden_lstm_half");
    if (backbone_layers < 1) throw ConfigError("backbone_layers must be >= 1");
    if (backbone_heads <= 0 || hidden_bert % backbone_heads != 0)
      throw ConfigError("backbone_heads must divide hidden_bert");
    if (max_positions < 4) throw ConfigError("max_positions must be >= 4");
    if (subtoken_pooling != "first" && subtoken_pooling != "mean")
      throw ConfigError("subtoken_pooling must be 'first' or 'mean'");
    if (backbone == "pretrained" && backbone_weights.empty())
      throw ConfigError("pretrained backbone requires backbone_weights path");
  }
};

// ---------------------------------------------------------------------------
// Transformer backbone (token/position/segment embeddings + post-norm blocks
// with GELU feed-forward), sized by the config for both toy and pretrained.

class TransformerBackbone {
 public:
  TransformerBackbone() = default;
  TransformerBackbone(nn::ParamRegistry& reg, const EncoderConfig& cfg,
                      int vocab_size, Rng& rng)
      : max_positions_(cfg.max_positions), dropout_(cfg.backbone_dropout) {
    const int d = cfg.hidden_bert;
    tok_ = nn::Embedding(reg, "backbone.tok", vocab_size, d, rng);
    pos_ = nn::Embedding(reg, "backbone.pos", cfg.max_positions, d, rng);
    seg_ = nn::Embedding(reg, "backbone.seg", 2, d, rng);
    emb_ln_ = nn::LayerNorm(reg, "backbone.emb_ln", d);
    for (int l = 0; l < cfg.backbone_layers; ++l) {
      const std::string p = "backbone.layer" + std::to_string(l);
      layers_.push_back(Layer{
          nn::MultiHeadSelfAttention(reg, p + ".attn", d, cfg.backbone_heads,
                                     rng),
          nn::Linear(reg, p + ".ff1", d, cfg.ff_width(), rng),
          nn::Linear(reg, p + ".ff2", cfg.ff_width(), d, rng),
          nn::LayerNorm(reg, p + ".ln1", d),
          nn::LayerNorm(reg, p + ".ln2", d),
      });
    }
  }

  // ids include the sentence-start and sentence-end markers.
  ag::Var forward(const std::vector<int>& ids, Rng& rng, bool training) const {
    const int m = static_cast<int>(ids.size());
    if (m > max_positions_)
      throw SequenceTooLongError("sequence of " + std::to_string(m) +
                                 " subtokens exceeds position limit " +
                                 std::to_string(max_positions_));
    std::vector<int> positions(ids.size());
    for (int i = 0; i < m; ++i) positions[i] = i;
    const std::vector<int> segments(ids.size(), 0);
    ag::Var x = ag::add(ag::add(tok_.forward(ids), pos_.forward(positions)),
                        seg_.forward(segments));
    x = ag::dropout(emb_ln_.forward(x), dropout_, rng, training);
    for (const Layer& layer : layers_) {
      ag::Var a = layer.attn.forward(x).out;
      x = layer.ln1.forward(ag::add(x, ag::dropout(a, dropout_, rng, training)));
      ag::Var f = layer.ff2.forward(ag::gelu(layer.ff1.forward(x)));
      x = layer.ln2.forward(ag::add(x, ag::dropout(f, dropout_, rng, training)));
    }
    return x;
  }

 private:
  struct Layer {
    nn::MultiHeadSelfAttention attn;
    nn::Linear ff1, ff2;
    nn::LayerNorm ln1, ln2;
  };

  nn::Embedding tok_, pos_, seg_;
  nn::LayerNorm emb_ln_;
  std::vector<Layer> layers_;
  int max_positions_ = 0;
  double dropout_ = 0.0;
};

// ---------------------------------------------------------------------------
// Dual encoder.

// Which channels run for real; the single-channel modes replace the other
// channel with a learned projection so downstream shapes are unchanged.
enum class ChannelMode { Both, E1Only, E2Only };

struct ChannelStates {
  ag::Var h_bert;  // n x d_bert
  ag::Var h_lstm;  // n x d_lstm
  ag::Var cls;     // 1 x d_bert, sentence-start feature
  std::vector<char> mask;
};

class DualEncoder {
 public:
  DualEncoder() = default;
  DualEncoder(nn::ParamRegistry& reg, const EncoderConfig& cfg, int vocab_size,
              Rng& rng, ChannelMode mode = ChannelMode::Both)
      : cfg_(cfg), mode_(mode) {
    cfg_.validate();
    backbone_ = TransformerBackbone(reg, cfg_, vocab_size, rng);
    if (mode_ == ChannelMode::E1Only) {
      bert_to_lstm_ = nn::Linear(reg, "enc.bert_to_lstm", cfg_.d_bert(),
                                 cfg_.d_lstm(), rng);
    } else {
      lstm_ = nn::BiLstm(reg, "enc.lstm", cfg_.d_bert(), cfg_.hidden_lstm_half,
                         rng);
      sa_ = nn::MultiHeadSelfAttention(reg, "enc.sa", cfg_.d_lstm(),
                                       cfg_.self_attention_heads, rng);
      if (mode_ == ChannelMode::E2Only)
        lstm_to_bert_ = nn::Linear(reg, "enc.lstm_to_bert", cfg_.d_lstm(),
                                   cfg_.d_bert(), rng);
    }
  }

  ChannelStates encode(const Tokenized& tok, Rng& rng, bool training) const {
    ag::Var sub = backbone_.forward(tok.ids, rng, training);
    ag::Var cls = ag::row(sub, 0);
    ag::Var aligned = align_words(sub, tok.word_spans);

    ag::Var h_bert, h_lstm;
    switch (mode_) {
      case ChannelMode::Both:
        h_bert = aligned;
        h_lstm = lstm_channel(aligned);
        break;
      case ChannelMode::E1Only:
        h_bert = aligned;
        h_lstm = bert_to_lstm_.forward(aligned);
        break;
      case ChannelMode::E2Only:
        h_lstm = lstm_channel(aligned);
        h_bert = lstm_to_bert_.forward(h_lstm);
        break;
    }
    h_bert = ag::dropout(h_bert, cfg_.dropout, rng, training);
    h_lstm = ag::dropout(h_lstm, cfg_.dropout, rng, training);

    ChannelStates out;
    out.h_bert = h_bert;
    out.h_lstm = h_lstm;
    out.cls = cls;
    out.mask.assign(tok.word_spans.size(), 1);
    return out;
  }

  // Same as encode but zero-padded to pad_len rows, with the mask marking the
  // real positions; padding never enters attention or recurrence.
  ChannelStates encode_padded(const Tokenized& tok, int pad_len, Rng& rng,
                              bool training) const {
    ChannelStates s = encode(tok, rng, training);
    const int n = static_cast<int>(tok.word_spans.size());
    if (pad_len < n) throw ConfigError("pad_len shorter than sentence");
    if (pad_len > n) {
      ag::Var zb = ag::constant(ag::Mat::Zero(pad_len - n, cfg_.d_bert()));
      ag::Var zl = ag::constant(ag::Mat::Zero(pad_len - n, cfg_.d_lstm()));
      s.h_bert = ag::concat_rows({s.h_bert, zb});
      s.h_lstm = ag::concat_rows({s.h_lstm, zl});
    }
    s.mask.assign(static_cast<std::size_t>(pad_len), 0);
    for (int i = 0; i < n; ++i) s.mask[i] = 1;
    return s;
  }

  const EncoderConfig& config() const { return cfg_; }
  ChannelMode mode() const { return mode_; }

 private:
  ag::Var lstm_channel(const ag::Var& aligned) const {
    ag::Var h = lstm_.forward(aligned);
    return ag::add(h, sa_.forward(h).out);
  }

  // Pools subtoken rows into one row per word with a fixed pooling matrix.
  ag::Var align_words(const ag::Var& sub,
                      const std::vector<std::pair<int, int>>& spans) const {
    const int n = static_cast<int>(spans.size());
    ag::Mat pool = ag::Mat::Zero(n, sub.rows());
    for (int w = 0; w < n; ++w) {
      const auto [first, last] = spans[w];
      if (cfg_.subtoken_pooling == "first") {
        pool(w, first) = 1.0;
      } else {
        const double inv = 1.0 / static_cast<double>(last - first + 1);
        for (int j = first; j <= last; ++j) pool(w, j) = inv;
      }
    }
    return ag::matmul(ag::constant(std::move(pool)), sub);
  }

  EncoderConfig cfg_;
  ChannelMode mode_ = ChannelMode::Both;
  TransformerBackbone backbone_;
  nn::BiLstm lstm_;
  nn::MultiHeadSelfAttention sa_;
  nn::Linear bert_to_lstm_;
  nn::Linear lstm_to_bert_;
};

}  // namespace d2e2s
