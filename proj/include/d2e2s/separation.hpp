#pragma once

// Similarity-separation loss: rows of the two adjacency matrices are treated
// as logits; the loss rewards large symmetric KL divergence between the
// softmax distributions of corresponding rows.

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"

namespace d2e2s {

struct SeparationConfig {
  double alpha = 10.0;
  double epsilon = 1e-8;

  void validate() const {
    if (alpha < 0.0) throw ConfigError("separation alpha must be >= 0");
    if (epsilon <= 0.0) throw ConfigError("separation epsilon must be > 0");
  }
};

// Row-wise KL(softmax(p) || softmax(q)) for equal-shaped logit matrices;
// returns an (m x 1) column.
inline ag::Var kl_rows(const ag::Var& p_logits, const ag::Var& q_logits) {
  ag::Var p = ag::row_softmax(p_logits);
  ag::Var q = ag::row_softmax(q_logits);
  return ag::row_sum(ag::mul(p, ag::sub(ag::log_(p), ag::log_(q))));
}

// Scalar convenience for single rows.
inline ag::Var row_kl(const ag::Var& p_logits_row, const ag::Var& q_logits_row) {
  return kl_rows(p_logits_row, q_logits_row);
}

// L = sum_i log(1 + 1 / (KL(syn_i||sem_i) + KL(sem_i||syn_i) + eps)).
// Strictly positive, finite for eps > 0, and strictly decreasing in each
// row's symmetric KL.
inline ag::Var separation_loss(const ag::Var& syn_logits,
                               const ag::Var& sem_logits,
                               double epsilon = 1e-8) {
  ag::Var sym =
      ag::add(kl_rows(syn_logits, sem_logits), kl_rows(sem_logits, syn_logits));
  ag::Var inv = ag::pow_scalar(ag::add_scalar(sym, epsilon), -1.0);
  return ag::sum(ag::log_(ag::add_scalar(inv, 1.0)));
}

}  // namespace d2e2s
