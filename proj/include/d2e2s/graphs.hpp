#pragma once

// Graph construction and propagation: 0/1 dependency adjacency, attention
// based semantic adjacency, symmetric-normalized graph convolution stacks.

#include <string>
#include <vector>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"
#include "d2e2s/corpus.hpp"
#include "d2e2s/nn.hpp"

namespace d2e2s {

// ---------------------------------------------------------------------------
// Syntactic adjacency: symmetric 0/1 matrix over dependency edges, zero
// diagonal (self-loops are added during propagation, not stored).

inline ag::Mat build_syn_adjacency(const Sentence& s) {
  const int n = s.word_count();
  ag::Mat a = ag::Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const int head = s.dep_heads[i];
    if (head > 0) {
      a(i, head - 1) = 1.0;
      a(head - 1, i) = 1.0;
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Normalized propagation matrix D^{-1/2} (A + I) D^{-1/2}.

inline ag::Mat normalize_adjacency_dense(const ag::Mat& a) {
  ag::Mat a_hat = a + ag::Mat::Identity(a.rows(), a.cols());
  Eigen::VectorXd dinv = a_hat.rowwise().sum().array().pow(-0.5);
  return dinv.asDiagonal() * a_hat * dinv.asDiagonal();
}

// Differentiable version for adjacencies that depend on parameters.
inline ag::Var normalize_adjacency(const ag::Var& a) {
  ag::Var a_hat =
      ag::add(a, ag::constant(ag::Mat::Identity(a.rows(), a.cols())));
  ag::Var dinv = ag::pow_scalar(ag::row_sum(a_hat), -0.5);
  return ag::bc_mul_row(ag::bc_mul_col(a_hat, dinv), ag::transpose(dinv));
}

// ---------------------------------------------------------------------------
// Semantic adjacency: multi-head attention scores over the backbone channel,
// combined across heads by mean (default) or by renormalized elementwise max.

class SemanticAttention {
 public:
  SemanticAttention() = default;
  SemanticAttention(nn::ParamRegistry& reg, const std::string& name,
                    Eigen::Index dim, Eigen::Index heads, Rng& rng,
                    std::string combine = "mean")
      : dim_(dim), heads_(heads), combine_(std::move(combine)) {
    if (heads <= 0 || dim % heads != 0)
      throw ConfigError("semantic attention heads must divide dim");
    if (combine_ != "mean" && combine_ != "max")
      throw ConfigError("semantic attention combine must be 'mean' or 'max'");
    wq_ = nn::Linear(reg, name + ".q", dim, dim, rng);
    wk_ = nn::Linear(reg, name + ".k", dim, dim, rng);
  }

  // h: (n x dim) -> row-stochastic (n x n).
  ag::Var forward(const ag::Var& h) const {
    const Eigen::Index dh = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    ag::Var q = wq_.forward(h);
    ag::Var k = wk_.forward(h);
    ag::Var combined;
    for (Eigen::Index i = 0; i < heads_; ++i) {
      ag::Var qi = ag::slice_cols(q, i * dh, dh);
      ag::Var ki = ag::slice_cols(k, i * dh, dh);
      ag::Var attn = ag::row_softmax(
          ag::scal(ag::matmul(qi, ag::transpose(ki)), scale));
      if (!combined.defined())
        combined = attn;
      else
        combined = combine_ == "mean" ? ag::add(combined, attn)
                                      : ag::cwise_max(combined, attn);
    }
    if (combine_ == "mean")
      return ag::scal(combined, 1.0 / static_cast<double>(heads_));
    // Elementwise max breaks row normalization; restore it.
    ag::Var inv = ag::pow_scalar(ag::row_sum(combined), -1.0);
    return ag::bc_mul_col(combined, inv);
  }

 private:
  nn::Linear wq_, wk_;
  Eigen::Index dim_ = 0;
  Eigen::Index heads_ = 0;
  std::string combine_ = "mean";
};

// ---------------------------------------------------------------------------
// GcnStack: L layers of H <- ReLU(P H W), weights per layer, no bias, width
// preserved. P is the normalized propagation matrix of the chosen adjacency.

class GcnStack {
 public:
  GcnStack() = default;
  GcnStack(nn::ParamRegistry& reg, const std::string& name, Eigen::Index dim,
           int n_layers, Rng& rng) {
    if (n_layers < 1) throw ConfigError("gcn stack needs at least one layer");
    for (int l = 0; l < n_layers; ++l)
      layers_.emplace_back(reg, name + ".l" + std::to_string(l), dim, dim, rng,
                           /*bias=*/false);
  }

  ag::Var forward(const ag::Var& norm_adj, const ag::Var& h) const {
    ag::Var x = h;
    for (const nn::Linear& layer : layers_)
      x = ag::relu(ag::matmul(norm_adj, layer.forward(x)));
    return x;
  }

  int layer_count() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<nn::Linear> layers_;
};

}  // namespace d2e2s
