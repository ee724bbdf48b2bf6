#pragma once

// Heterogeneous feature interaction: attention double-pooling, single graph
// convolutions, gated graph convolution over a sparsified graph, the mutual
// biaffine substitute, and the final fusion MLP.

#include <string>
#include <utility>
#include <vector>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"
#include "d2e2s/graphs.hpp"
#include "d2e2s/nn.hpp"

namespace d2e2s {

struct HfimConfig {
  int gcnconv_layers = 1;
  int gatedconv_layers = 1;
  int sadpool_layers = 1;
  double sparsify_threshold = 0.0;
  std::string interaction_mode = "hfim";  // hfim | biaffine
  // Branch switches for ablations; a disabled branch is not built and its
  // outputs are zero.
  bool syn_branch = true;
  bool sem_branch = true;

  void validate() const {
    if (interaction_mode != "hfim" && interaction_mode != "biaffine")
      throw ConfigError("interaction_mode must be 'hfim' or 'biaffine'");
    if (interaction_mode == "hfim" &&
        (gcnconv_layers < 1 || gatedconv_layers < 1 || sadpool_layers < 1))
      throw ConfigError("hfim layer counts must all be >= 1");
    if (!syn_branch && !sem_branch)
      throw ConfigError("at least one interaction branch must be enabled");
    if (interaction_mode == "biaffine" && (!syn_branch || !sem_branch))
      throw ConfigError("biaffine interaction needs both branches");
  }
};

// ---------------------------------------------------------------------------
// SADPool: rescale each node's features by its attention row statistics, with
// a +1 residual so original features survive, then ReLU.
// H' = ReLU(H o (1 + S_mean + S_max)), S_* = row mean / row max of A_sem.

inline ag::Var sadpool(const ag::Var& h, const ag::Var& a_sem) {
  ag::Var scale = ag::add_scalar(
      ag::add(ag::row_mean(a_sem), ag::row_max(a_sem)), 1.0);
  return ag::relu(ag::bc_mul_col(h, scale));
}

// ---------------------------------------------------------------------------
// GCNConv: one raw propagation H' = P H Theta with P = D^{-1/2}(A+I)D^{-1/2};
// no bias, no activation (callers wrap it).

class GcnConv {
 public:
  GcnConv() = default;
  GcnConv(nn::ParamRegistry& reg, const std::string& name, Eigen::Index in,
          Eigen::Index out, Rng& rng)
      : theta_(reg, name, in, out, rng, /*bias=*/false) {}

  ag::Var forward(const ag::Var& norm_adj, const ag::Var& h) const {
    return ag::matmul(norm_adj, theta_.forward(h));
  }

 private:
  nn::Linear theta_;
};

// ---------------------------------------------------------------------------
// Sparsified graph: edges where the dense matrix exceeds the threshold,
// weighted by cosine similarity of the endpoints' node features. The weight
// matrix stays differentiable with respect to the features.

struct SparseGraph {
  std::vector<std::pair<int, int>> edge_index;  // (src, dst)
  std::vector<double> edge_attr;                // cosine at each edge
  ag::Var weights;                              // n x n, zero off-edge
};

inline SparseGraph sparsify(const ag::Mat& dense, const ag::Var& features,
                            double threshold, double cos_eps = 1e-12) {
  const Eigen::Index n = dense.rows();
  if (dense.cols() != n) throw ConfigError("sparsify needs a square matrix");
  if (features.rows() != n)
    throw ConfigError("sparsify feature rows must match node count");

  ag::Mat mask = ag::Mat::Zero(n, n);
  SparseGraph g;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (dense(i, j) > threshold) {
        mask(i, j) = 1.0;
        g.edge_index.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }

  // cosine(i, j) = <h_i, h_j> / max(|h_i||h_j|, eps), computed densely.
  // The squared norms are clamped before the sqrt so all-zero feature rows
  // get a zero gradient instead of an infinite one.
  ag::Var dots = ag::matmul(features, ag::transpose(features));
  ag::Var norms = ag::sqrt_(ag::clamp_min(ag::row_sum(ag::square(features)),
                                          cos_eps * cos_eps));  // n x 1
  ag::Var denom = ag::clamp_min(ag::matmul(norms, ag::transpose(norms)),
                                cos_eps);
  ag::Var cosine = ag::mul(dots, ag::pow_scalar(denom, -1.0));
  g.weights = ag::mul(ag::constant(std::move(mask)), cosine);
  g.edge_attr.reserve(g.edge_index.size());
  for (const auto& [src, dst] : g.edge_index)
    g.edge_attr.push_back(g.weights.value()(src, dst));
  return g;
}

// ---------------------------------------------------------------------------
// GatedGraphConv: m_i = sum_j w[j][i] * (Theta h_j); h_i' = GRU(m_i, h_i),
// repeated for the configured number of rounds with one shared cell.

class GatedGraphConv {
 public:
  GatedGraphConv() = default;
  GatedGraphConv(nn::ParamRegistry& reg, const std::string& name,
                 Eigen::Index dim, int layers, Rng& rng)
      : theta_(reg, name + ".theta", dim, dim, rng, /*bias=*/false),
        gru_(reg, name + ".gru", dim, dim, rng),
        layers_(layers) {
    if (layers < 1) throw ConfigError("gated conv needs at least one layer");
  }

  ag::Var forward(const ag::Var& h, const SparseGraph& g) const {
    ag::Var x = h;
    ag::Var wt = ag::transpose(g.weights);
    for (int l = 0; l < layers_; ++l) {
      ag::Var msg = ag::matmul(wt, theta_.forward(x));
      x = gru_.forward(msg, x);
    }
    return x;
  }

  const nn::GruCell& cell() const { return gru_; }

 private:
  nn::Linear theta_;
  nn::GruCell gru_;
  int layers_ = 1;
};

// ---------------------------------------------------------------------------
// Mutual biaffine exchange, the ablation substitute for the interaction
// pipeline: each stream attends into the other through a bilinear form.

class MutualBiAffine {
 public:
  MutualBiAffine() = default;
  MutualBiAffine(nn::ParamRegistry& reg, const std::string& name,
                 Eigen::Index dim, Rng& rng) {
    w1_ = reg.add(name + ".w1", nn::xavier_uniform(dim, dim, rng));
    w2_ = reg.add(name + ".w2", nn::xavier_uniform(dim, dim, rng));
  }

  std::pair<ag::Var, ag::Var> forward(const ag::Var& h_syn,
                                      const ag::Var& h_sem) const {
    ag::Var a1 = ag::row_softmax(
        ag::matmul(ag::matmul(h_syn, w1_), ag::transpose(h_sem)));
    ag::Var a2 = ag::row_softmax(
        ag::matmul(ag::matmul(h_sem, w2_), ag::transpose(h_syn)));
    return {ag::matmul(a1, h_sem), ag::matmul(a2, h_syn)};
  }

 private:
  ag::Var w1_, w2_;
};

// ---------------------------------------------------------------------------
// The interaction module: per-channel graph convolution stacks feed two
// branch pipelines (or the biaffine exchange), producing channel-split
// syntactic and semantic features.

struct InteractOutputs {
  ag::Var lstm_syn;  // n x d_l
  ag::Var bert_syn;  // n x d_b
  ag::Var lstm_sem;  // n x d_l
  ag::Var bert_sem;  // n x d_b
};

class Hfim {
 public:
  Hfim() = default;
  // channel_gcn_layers == 0 skips the per-channel stacks entirely (the
  // raw channel features feed the interaction directly).
  Hfim(nn::ParamRegistry& reg, const std::string& name, Eigen::Index d_l,
       Eigen::Index d_b, int channel_gcn_layers, const HfimConfig& cfg,
       Rng& rng)
      : cfg_(cfg), d_l_(d_l), d_b_(d_b), channel_layers_(channel_gcn_layers) {
    cfg_.validate();
    if (channel_gcn_layers < 0)
      throw ConfigError("channel gcn layer count must be >= 0");
    if (channel_gcn_layers > 0) {
      if (cfg_.syn_branch) {
        syn_lstm_ =
            GcnStack(reg, name + ".syn_lstm", d_l, channel_gcn_layers, rng);
        syn_bert_ =
            GcnStack(reg, name + ".syn_bert", d_b, channel_gcn_layers, rng);
      }
      if (cfg_.sem_branch) {
        sem_lstm_ =
            GcnStack(reg, name + ".sem_lstm", d_l, channel_gcn_layers, rng);
        sem_bert_ =
            GcnStack(reg, name + ".sem_bert", d_b, channel_gcn_layers, rng);
      }
    }
    const Eigen::Index d = d_l + d_b;
    if (cfg_.interaction_mode == "biaffine") {
      biaffine_ = MutualBiAffine(reg, name + ".biaffine", d, rng);
      return;
    }
    if (cfg_.syn_branch) {
      for (int l = 0; l < cfg_.gcnconv_layers; ++l)
        gcn_syn_.emplace_back(reg, name + ".gcn_syn.l" + std::to_string(l), d,
                              d, rng);
      gated_syn_ = GatedGraphConv(reg, name + ".gated_syn", d,
                                  cfg_.gatedconv_layers, rng);
    }
    if (cfg_.sem_branch) {
      for (int l = 0; l < cfg_.gcnconv_layers; ++l)
        gcn_sem_.emplace_back(reg, name + ".gcn_sem.l" + std::to_string(l), d,
                              d, rng);
      gated_sem_ = GatedGraphConv(reg, name + ".gated_sem", d,
                                  cfg_.gatedconv_layers, rng);
    }
  }

  InteractOutputs interact(const ag::Var& h_lstm, const ag::Var& h_bert,
                           const ag::Mat& a_syn, const ag::Var& a_sem,
                           std::vector<std::string>* trace = nullptr) const {
    const Eigen::Index n = h_lstm.rows();
    ag::Var zero_out = ag::constant(ag::Mat::Zero(n, d_l_ + d_b_));
    ag::Var out_syn = zero_out, out_sem = zero_out;

    ag::Var p_syn, p_sem, h_syn, h_sem;
    if (cfg_.syn_branch) {
      p_syn = ag::constant(normalize_adjacency_dense(a_syn));
      h_syn = channel_features(p_syn, h_lstm, h_bert, syn_lstm_, syn_bert_,
                               trace, "hfim.channel_gcn[syn]");
    }
    if (cfg_.sem_branch) {
      p_sem = normalize_adjacency(a_sem);
      h_sem = channel_features(p_sem, h_lstm, h_bert, sem_lstm_, sem_bert_,
                               trace, "hfim.channel_gcn[sem]");
    }

    if (cfg_.interaction_mode == "biaffine") {
      if (trace) trace->push_back("hfim.biaffine");
      std::tie(out_syn, out_sem) = biaffine_.forward(h_syn, h_sem);
    } else {
      if (cfg_.syn_branch) {
        if (trace) trace->push_back("hfim.syn_branch");
        out_syn = branch(h_syn, p_syn, a_syn, a_sem, gcn_syn_, gated_syn_);
      }
      if (cfg_.sem_branch) {
        if (trace) trace->push_back("hfim.sem_branch");
        out_sem =
            branch(h_sem, p_sem, a_sem.value(), a_sem, gcn_sem_, gated_sem_);
      }
    }
    return {ag::slice_cols(out_syn, 0, d_l_),
            ag::slice_cols(out_syn, d_l_, d_b_),
            ag::slice_cols(out_sem, 0, d_l_),
            ag::slice_cols(out_sem, d_l_, d_b_)};
  }

  const HfimConfig& config() const { return cfg_; }

 private:
  ag::Var channel_features(const ag::Var& norm_adj, const ag::Var& h_lstm,
                           const ag::Var& h_bert, const GcnStack& lstm_stack,
                           const GcnStack& bert_stack,
                           std::vector<std::string>* trace,
                           const char* trace_name) const {
    if (channel_layers_ == 0) return ag::concat_cols({h_lstm, h_bert});
    if (trace) trace->push_back(trace_name);
    return ag::concat_cols({lstm_stack.forward(norm_adj, h_lstm),
                            bert_stack.forward(norm_adj, h_bert)});
  }

  ag::Var branch(const ag::Var& h, const ag::Var& norm_adj,
                 const ag::Mat& sparsify_source, const ag::Var& a_sem,
                 const std::vector<GcnConv>& convs,
                 const GatedGraphConv& gated) const {
    ag::Var x = h;
    for (const GcnConv& conv : convs)
      x = ag::relu(conv.forward(norm_adj, x));
    for (int l = 0; l < cfg_.sadpool_layers; ++l) x = sadpool(x, a_sem);
    SparseGraph g = sparsify(sparsify_source, x, cfg_.sparsify_threshold);
    return ag::relu(gated.forward(x, g));
  }

  HfimConfig cfg_;
  Eigen::Index d_l_ = 0;
  Eigen::Index d_b_ = 0;
  int channel_layers_ = 0;
  GcnStack syn_lstm_, syn_bert_, sem_lstm_, sem_bert_;
  std::vector<GcnConv> gcn_syn_, gcn_sem_;
  GatedGraphConv gated_syn_, gated_sem_;
  MutualBiAffine biaffine_;
};

// ---------------------------------------------------------------------------
// Fusion MLP over the syntactic LSTM block and the semantic backbone block.

class FeatureFusion {
 public:
  FeatureFusion() = default;
  FeatureFusion(nn::ParamRegistry& reg, const std::string& name,
                Eigen::Index d_l, Eigen::Index d_b, Eigen::Index d_out,
                Rng& rng)
      : mlp_(reg, name, {d_l + d_b, d_out, d_out}, rng) {}

  ag::Var forward(const ag::Var& lstm_syn, const ag::Var& bert_sem) const {
    return mlp_.forward(ag::concat_cols({lstm_syn, bert_sem}));
  }

 private:
  nn::Mlp mlp_;
};

}  // namespace d2e2s
