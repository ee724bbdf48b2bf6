#pragma once

// Neural-network building blocks on top of the autograd tape: parameter
// registry, linear/embedding/normalization layers, recurrent cells, and
// multi-head self-attention.

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"

namespace d2e2s::nn {

using ag::Mat;
using ag::Var;

// ---------------------------------------------------------------------------
// Initialization helpers.

inline Mat uniform_mat(Eigen::Index r, Eigen::Index c, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

inline Mat xavier_uniform(Eigen::Index r, Eigen::Index c, Rng& rng) {
  return uniform_mat(r, c, std::sqrt(6.0 / static_cast<double>(r + c)), rng);
}

inline Mat normal_mat(Eigen::Index r, Eigen::Index c, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

// ---------------------------------------------------------------------------
// ParamRegistry: owns every trainable tensor under a unique name so the
// optimizer and checkpoint code can enumerate them.

class ParamRegistry {
 public:
  Var add(const std::string& name, Mat init) {
    if (index_.count(name) != 0)
      throw ConfigError("duplicate parameter name: " + name);
    Var v(std::move(init), /*requires_grad=*/true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, v);
    return v;
  }

  Var* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Var>>& entries() const {
    return entries_;
  }

  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : entries_)
      n += static_cast<std::size_t>(v.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : entries_) v.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Linear: y = x W + b, with W stored (in x out).

class Linear {
 public:
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, Eigen::Index in,
         Eigen::Index out, Rng& rng, bool bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    w_ = reg.add(name + ".weight", uniform_mat(in, out, bound, rng));
    if (bias) b_ = reg.add(name + ".bias", uniform_mat(1, out, bound, rng));
  }

  Var forward(const Var& x) const {
    Var y = ag::matmul(x, w_);
    if (b_.defined()) y = ag::bc_add_row(y, b_);
    return y;
  }

  const Var& weight() const { return w_; }
  const Var& bias() const { return b_; }

 private:
  Var w_;
  Var b_;
};

// Mlp: stack of linear layers with ReLU between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamRegistry& reg, const std::string& name,
      const std::vector<Eigen::Index>& dims, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("mlp needs at least two dims");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      layers_.emplace_back(reg, name + ".l" + std::to_string(i), dims[i],
                           dims[i + 1], rng);
  }

  Var forward(const Var& x) const {
    Var h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h);
      if (i + 1 < layers_.size()) h = ag::relu(h);
    }
    return h;
  }

 private:
  std::vector<Linear> layers_;
};

// ---------------------------------------------------------------------------
// Embedding: lookup table (vocab x dim); forward gathers one row per id.

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamRegistry& reg, const std::string& name, Eigen::Index vocab,
            Eigen::Index dim, Rng& rng, double stddev = 0.02) {
    table_ = reg.add(name + ".weight", normal_mat(vocab, dim, stddev, rng));
  }

  Var forward(const std::vector<int>& ids) const {
    return ag::gather_rows(table_, ids);
  }

  const Var& table() const { return table_; }

 private:
  Var table_;
};

// ---------------------------------------------------------------------------
// LayerNorm over the last dimension (each row normalized independently).

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, Eigen::Index dim,
            double eps = 1e-12)
      : eps_(eps) {
    gamma_ = reg.add(name + ".gamma", Mat::Ones(1, dim));
    beta_ = reg.add(name + ".beta", Mat::Zero(1, dim));
  }

  Var forward(const Var& x) const {
    Var mu = ag::row_mean(x);
    Var xc = ag::bc_add_col(x, ag::neg(mu));
    Var var = ag::row_mean(ag::square(xc));
    Var inv_std = ag::pow_scalar(ag::add_scalar(var, eps_), -0.5);
    Var y = ag::bc_mul_col(xc, inv_std);
    return ag::bc_add_row(ag::bc_mul_row(y, gamma_), beta_);
  }

 private:
  Var gamma_;
  Var beta_;
  double eps_ = 1e-12;
};

// ---------------------------------------------------------------------------
// GruCell, gate layout [r | z | n]:
//   r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//   z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//   n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//   h' = (1 - z) * n + z * h

class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamRegistry& reg, const std::string& name, Eigen::Index in,
          Eigen::Index hidden, Rng& rng)
      : hidden_(hidden) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    w_ih_ = reg.add(name + ".w_ih", uniform_mat(in, 3 * hidden, bound, rng));
    w_hh_ = reg.add(name + ".w_hh",
                    uniform_mat(hidden, 3 * hidden, bound, rng));
    b_ih_ = reg.add(name + ".b_ih", uniform_mat(1, 3 * hidden, bound, rng));
    b_hh_ = reg.add(name + ".b_hh", uniform_mat(1, 3 * hidden, bound, rng));
  }

  // x: (n x in), h: (n x hidden) -> (n x hidden).
  Var forward(const Var& x, const Var& h) const {
    const Eigen::Index hd = hidden_;
    Var gi = ag::bc_add_row(ag::matmul(x, w_ih_), b_ih_);
    Var gh = ag::bc_add_row(ag::matmul(h, w_hh_), b_hh_);
    Var r = ag::sigmoid(ag::add(ag::slice_cols(gi, 0, hd),
                                ag::slice_cols(gh, 0, hd)));
    Var z = ag::sigmoid(ag::add(ag::slice_cols(gi, hd, hd),
                                ag::slice_cols(gh, hd, hd)));
    Var n = ag::tanh_(ag::add(ag::slice_cols(gi, 2 * hd, hd),
                              ag::mul(r, ag::slice_cols(gh, 2 * hd, hd))));
    Var one_minus_z = ag::add_scalar(ag::neg(z), 1.0);
    return ag::add(ag::mul(one_minus_z, n), ag::mul(z, h));
  }

  Eigen::Index hidden_size() const { return hidden_; }

 private:
  Var w_ih_, w_hh_, b_ih_, b_hh_;
  Eigen::Index hidden_ = 0;
};

// ---------------------------------------------------------------------------
// LstmCell, gate layout [i | f | g | o]:
//   i = sigmoid(.), f = sigmoid(.), g = tanh(.), o = sigmoid(.)
//   c' = f * c + i * g,  h' = o * tanh(c')

class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParamRegistry& reg, const std::string& name, Eigen::Index in,
           Eigen::Index hidden, Rng& rng)
      : hidden_(hidden) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    w_ih_ = reg.add(name + ".w_ih", uniform_mat(in, 4 * hidden, bound, rng));
    w_hh_ = reg.add(name + ".w_hh",
                    uniform_mat(hidden, 4 * hidden, bound, rng));
    b_ih_ = reg.add(name + ".b_ih", uniform_mat(1, 4 * hidden, bound, rng));
    b_hh_ = reg.add(name + ".b_hh", uniform_mat(1, 4 * hidden, bound, rng));
  }

  struct State {
    Var h;
    Var c;
  };

  State forward(const Var& x, const State& s) const {
    const Eigen::Index hd = hidden_;
    Var g = ag::add(ag::bc_add_row(ag::matmul(x, w_ih_), b_ih_),
                    ag::bc_add_row(ag::matmul(s.h, w_hh_), b_hh_));
    Var i = ag::sigmoid(ag::slice_cols(g, 0, hd));
    Var f = ag::sigmoid(ag::slice_cols(g, hd, hd));
    Var gg = ag::tanh_(ag::slice_cols(g, 2 * hd, hd));
    Var o = ag::sigmoid(ag::slice_cols(g, 3 * hd, hd));
    Var c = ag::add(ag::mul(f, s.c), ag::mul(i, gg));
    Var h = ag::mul(o, ag::tanh_(c));
    return {h, c};
  }

  Eigen::Index hidden_size() const { return hidden_; }

 private:
  Var w_ih_, w_hh_, b_ih_, b_hh_;
  Eigen::Index hidden_ = 0;
};

// ---------------------------------------------------------------------------
// BiLstm: runs one LSTM left-to-right and another right-to-left over the rows
// of the input and concatenates the two hidden sequences column-wise, so a
// (n x in) input becomes (n x 2*hidden).

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(ParamRegistry& reg, const std::string& name, Eigen::Index in,
         Eigen::Index hidden, Rng& rng)
      : fwd_(reg, name + ".fwd", in, hidden, rng),
        bwd_(reg, name + ".bwd", in, hidden, rng) {}

  Var forward(const Var& x) const {
    return ag::concat_cols({run_direction(fwd_, x, /*reversed=*/false),
                            run_direction(bwd_, x, /*reversed=*/true)});
  }

  // Exposed for tests: one direction's hidden sequence in input row order.
  Var direction(const Var& x, bool reversed) const {
    return run_direction(reversed ? bwd_ : fwd_, x, reversed);
  }

 private:
  static Var run_direction(const LstmCell& cell, const Var& x, bool reversed) {
    const Eigen::Index n = x.rows();
    const Eigen::Index hd = cell.hidden_size();
    LstmCell::State s{ag::constant(Mat::Zero(1, hd)),
                      ag::constant(Mat::Zero(1, hd))};
    std::vector<Var> outs(static_cast<std::size_t>(n));
    for (Eigen::Index step = 0; step < n; ++step) {
      const Eigen::Index t = reversed ? n - 1 - step : step;
      s = cell.forward(ag::row(x, t), s);
      outs[static_cast<std::size_t>(t)] = s.h;
    }
    return ag::concat_rows(outs);
  }

  LstmCell fwd_;
  LstmCell bwd_;
};

// ---------------------------------------------------------------------------
// Multi-head self-attention with residual-free core: callers add residual and
// normalization. Returns both the projected output and each head's (n x n)
// attention matrix.

class MultiHeadSelfAttention {
 public:
  struct Result {
    Var out;                     // (n x d)
    std::vector<Var> head_attn;  // h matrices, each (n x n), rows sum to 1
  };

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParamRegistry& reg, const std::string& name,
                         Eigen::Index dim, Eigen::Index heads, Rng& rng)
      : dim_(dim), heads_(heads) {
    if (heads <= 0 || dim % heads != 0)
      throw ConfigError("attention dim must be divisible by head count");
    wq_ = Linear(reg, name + ".q", dim, dim, rng);
    wk_ = Linear(reg, name + ".k", dim, dim, rng);
    wv_ = Linear(reg, name + ".v", dim, dim, rng);
    wo_ = Linear(reg, name + ".o", dim, dim, rng);
  }

  // valid, when non-empty, marks real tokens; padding rows of the attention
  // output are zeroed and padding columns receive no probability mass.
  Result forward(const Var& x,
                 const std::vector<char>& valid = {}) const {
    std::vector<char> pad;
    if (!valid.empty()) {
      pad.resize(valid.size());
      for (std::size_t i = 0; i < valid.size(); ++i) pad[i] = valid[i] ? 0 : 1;
    }
    const Eigen::Index dh = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Var q = wq_.forward(x);
    Var k = wk_.forward(x);
    Var v = wv_.forward(x);
    std::vector<Var> heads_out;
    std::vector<Var> attn;
    heads_out.reserve(static_cast<std::size_t>(heads_));
    attn.reserve(static_cast<std::size_t>(heads_));
    for (Eigen::Index i = 0; i < heads_; ++i) {
      Var qi = ag::slice_cols(q, i * dh, dh);
      Var ki = ag::slice_cols(k, i * dh, dh);
      Var vi = ag::slice_cols(v, i * dh, dh);
      Var scores = ag::scal(ag::matmul(qi, ag::transpose(ki)), scale);
      Var a = ag::row_softmax(scores, valid, pad);
      attn.push_back(a);
      heads_out.push_back(ag::matmul(a, vi));
    }
    Var out = wo_.forward(ag::concat_cols(heads_out));
    return {out, attn};
  }

  Eigen::Index head_count() const { return heads_; }

 private:
  Linear wq_, wk_, wv_, wo_;
  Eigen::Index dim_ = 0;
  Eigen::Index heads_ = 0;
};

}  // namespace d2e2s::nn
