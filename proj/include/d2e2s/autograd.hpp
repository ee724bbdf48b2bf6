#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
// Every tensor in the model is a Var: a shared handle to a graph node
// holding an Eigen matrix, an optional gradient, and a backprop closure.
// Graphs are rebuilt per forward pass; parameters are leaf Vars that
// outlive the graph, so calling backward() on a loss accumulates into
// their .grad() until zero_grad().

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <unordered_set>
#include <utility>
#include <vector>

#include "d2e2s/common.hpp"

namespace d2e2s::ag {

using Mat = Eigen::MatrixXd;

struct Node {
  Mat value;
  Mat grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Mat& grad_ref() {
    if (!has_grad) {
      grad = Mat::Zero(value.rows(), value.cols());
      has_grad = true;
    }
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Mat value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }

  // Gradient accumulated by the last backward() calls; zero if untouched.
  const Mat& grad() const { return node_->grad_ref(); }
  Mat& grad() { return node_->grad_ref(); }
  void zero_grad() { node_->has_grad = false; }

  double scalar() const {
    assert(rows() == 1 && cols() == 1);
    return node_->value(0, 0);
  }

  // Backpropagates from this node (seed gradient = 1 everywhere).
  // Iterative post-order traversal; recursion would overflow on long
  // recurrent chains.
  void backward() const {
    if (!node_->requires_grad) return;
    node_->grad_ref().setOnes();

    std::vector<Node*> order;
    std::vector<std::pair<Node*, std::size_t>> stack;
    std::unordered_set<Node*> visited;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    // order is post-order (children after all their inputs), so iterate
    // from the root backwards.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop && n->has_grad) n->backprop(*n);
    }
  }

  std::shared_ptr<Node> node_;
};

inline Var constant(Mat m) { return Var(std::move(m), false); }
inline Var param(Mat m) { return Var(std::move(m), true); }
inline Var zeros(Eigen::Index r, Eigen::Index c) {
  return constant(Mat::Zero(r, c));
}

namespace detail {

inline Var make_op(Mat value, std::vector<Var> inputs,
                   std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& v : inputs) {
    node->requires_grad = node->requires_grad || v.node_->requires_grad;
    node->parents.push_back(v.node_);
  }
  if (node->requires_grad) node->backprop = std::move(backprop);
  Var out;
  out.node_ = std::move(node);
  return out;
}

inline void accum(const std::shared_ptr<Node>& p, const Mat& g) {
  if (p->requires_grad) p->grad_ref() += g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// arithmetic

inline Var add(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return detail::make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    detail::accum(n.parents[0], n.grad);
    detail::accum(n.parents[1], n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return detail::make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    detail::accum(n.parents[0], n.grad);
    detail::accum(n.parents[1], -n.grad);
  });
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return detail::make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    detail::accum(n.parents[0], n.grad.cwiseProduct(n.parents[1]->value));
    detail::accum(n.parents[1], n.grad.cwiseProduct(n.parents[0]->value));
  });
}

inline Var matmul(const Var& a, const Var& b) {
  assert(a.cols() == b.rows());
  return detail::make_op(a.value() * b.value(), {a, b}, [](Node& n) {
    detail::accum(n.parents[0], n.grad * n.parents[1]->value.transpose());
    detail::accum(n.parents[1], n.parents[0]->value.transpose() * n.grad);
  });
}

inline Var transpose(const Var& a) {
  return detail::make_op(a.value().transpose(), {a}, [](Node& n) {
    detail::accum(n.parents[0], n.grad.transpose());
  });
}

inline Var scal(const Var& a, double c) {
  return detail::make_op(a.value() * c, {a}, [c](Node& n) {
    detail::accum(n.parents[0], n.grad * c);
  });
}

inline Var add_scalar(const Var& a, double c) {
  return detail::make_op((a.value().array() + c).matrix(), {a}, [](Node& n) {
    detail::accum(n.parents[0], n.grad);
  });
}

inline Var neg(const Var& a) { return scal(a, -1.0); }

// ---------------------------------------------------------------------------
// elementwise nonlinearities

inline Var relu(const Var& a) {
  return detail::make_op(a.value().cwiseMax(0.0), {a}, [](Node& n) {
    const Mat mask =
        (n.parents[0]->value.array() > 0.0).cast<double>().matrix();
    detail::accum(n.parents[0], n.grad.cwiseProduct(mask));
  });
}

inline Var tanh_(const Var& a) {
  return detail::make_op(a.value().array().tanh().matrix(), {a}, [](Node& n) {
    const Mat d = (1.0 - n.value.array().square()).matrix();
    detail::accum(n.parents[0], n.grad.cwiseProduct(d));
  });
}

inline Var sigmoid(const Var& a) {
  Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return detail::make_op(std::move(y), {a}, [](Node& n) {
    const Mat d = (n.value.array() * (1.0 - n.value.array())).matrix();
    detail::accum(n.parents[0], n.grad.cwiseProduct(d));
  });
}

inline Var exp_(const Var& a) {
  return detail::make_op(a.value().array().exp().matrix(), {a}, [](Node& n) {
    detail::accum(n.parents[0], n.grad.cwiseProduct(n.value));
  });
}

inline Var log_(const Var& a) {
  return detail::make_op(a.value().array().log().matrix(), {a}, [](Node& n) {
    detail::accum(n.parents[0],
                  n.grad.cwiseQuotient(n.parents[0]->value));
  });
}

inline Var pow_scalar(const Var& a, double p) {
  return detail::make_op(a.value().array().pow(p).matrix(), {a}, [p](Node& n) {
    const Mat d = (p * n.parents[0]->value.array().pow(p - 1.0)).matrix();
    detail::accum(n.parents[0], n.grad.cwiseProduct(d));
  });
}

inline Var square(const Var& a) { return pow_scalar(a, 2.0); }
inline Var sqrt_(const Var& a) { return pow_scalar(a, 0.5); }

// Elementwise max of two matrices; ties route the gradient to a.
inline Var cwise_max(const Var& a, const Var& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return detail::make_op(a.value().cwiseMax(b.value()), {a, b}, [](Node& n) {
    const Mat pick_a =
        (n.parents[0]->value.array() >= n.parents[1]->value.array())
            .cast<double>()
            .matrix();
    detail::accum(n.parents[0], n.grad.cwiseProduct(pick_a));
    detail::accum(n.parents[1],
                  n.grad.cwiseProduct((1.0 - pick_a.array()).matrix()));
  });
}

// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
inline Var gelu(const Var& a) {
  Mat y = a.value().unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  });
  return detail::make_op(std::move(y), {a}, [](Node& n) {
    const Mat d = n.parents[0]->value.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + v * pdf;
    });
    detail::accum(n.parents[0], n.grad.cwiseProduct(d));
  });
}

// max(x, c) elementwise; gradient passes where x > c.
inline Var clamp_min(const Var& a, double c) {
  return detail::make_op(a.value().cwiseMax(c), {a}, [c](Node& n) {
    const Mat mask =
        (n.parents[0]->value.array() > c).cast<double>().matrix();
    detail::accum(n.parents[0], n.grad.cwiseProduct(mask));
  });
}

// ---------------------------------------------------------------------------
// broadcasts (row vector r is 1 x d, column vector c is n x 1)

inline Var bc_add_row(const Var& x, const Var& r) {
  assert(r.rows() == 1 && r.cols() == x.cols());
  Mat y = x.value().rowwise() + r.value().row(0);
  return detail::make_op(std::move(y), {x, r}, [](Node& n) {
    detail::accum(n.parents[0], n.grad);
    detail::accum(n.parents[1], n.grad.colwise().sum());
  });
}

inline Var bc_mul_row(const Var& x, const Var& r) {
  assert(r.rows() == 1 && r.cols() == x.cols());
  Mat y = (x.value().array().rowwise() * r.value().row(0).array()).matrix();
  return detail::make_op(std::move(y), {x, r}, [](Node& n) {
    const Mat& xv = n.parents[0]->value;
    const Mat& rv = n.parents[1]->value;
    detail::accum(n.parents[0],
                  (n.grad.array().rowwise() * rv.row(0).array()).matrix());
    detail::accum(n.parents[1], (n.grad.cwiseProduct(xv)).colwise().sum());
  });
}

inline Var bc_add_col(const Var& x, const Var& c) {
  assert(c.cols() == 1 && c.rows() == x.rows());
  Mat y = x.value().colwise() + c.value().col(0);
  return detail::make_op(std::move(y), {x, c}, [](Node& n) {
    detail::accum(n.parents[0], n.grad);
    detail::accum(n.parents[1], n.grad.rowwise().sum());
  });
}

inline Var bc_mul_col(const Var& x, const Var& c) {
  assert(c.cols() == 1 && c.rows() == x.rows());
  Mat y = (x.value().array().colwise() * c.value().col(0).array()).matrix();
  return detail::make_op(std::move(y), {x, c}, [](Node& n) {
    const Mat& xv = n.parents[0]->value;
    const Mat& cv = n.parents[1]->value;
    detail::accum(n.parents[0],
                  (n.grad.array().colwise() * cv.col(0).array()).matrix());
    detail::accum(n.parents[1], (n.grad.cwiseProduct(xv)).rowwise().sum());
  });
}

// ---------------------------------------------------------------------------
// reductions

inline Var row_sum(const Var& x) {
  return detail::make_op(x.value().rowwise().sum(), {x}, [](Node& n) {
    const auto d = n.parents[0]->value.cols();
    detail::accum(n.parents[0], n.grad * Mat::Ones(1, d));
  });
}

inline Var row_mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x.cols());
  return scal(row_sum(x), inv);
}

inline Var row_max(const Var& x) {
  const auto n_rows = x.rows();
  std::vector<Eigen::Index> argmax(n_rows);
  Mat y(n_rows, 1);
  for (Eigen::Index i = 0; i < n_rows; ++i)
    y(i, 0) = x.value().row(i).maxCoeff(&argmax[i]);
  return detail::make_op(std::move(y), {x}, [argmax](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i)
      g(i, argmax[i]) += n.grad(i, 0);
  });
}

// Column-wise max: returns 1 x d.
inline Var col_max(const Var& x) {
  const auto d = x.cols();
  std::vector<Eigen::Index> argmax(d);
  Mat y(1, d);
  for (Eigen::Index j = 0; j < d; ++j)
    y(0, j) = x.value().col(j).maxCoeff(&argmax[j]);
  return detail::make_op(std::move(y), {x}, [argmax](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    for (Eigen::Index j = 0; j < n.grad.cols(); ++j)
      g(argmax[j], j) += n.grad(0, j);
  });
}

inline Var sum(const Var& x) {
  Mat y(1, 1);
  y(0, 0) = x.value().sum();
  return detail::make_op(std::move(y), {x}, [](Node& n) {
    const Mat& pv = n.parents[0]->value;
    detail::accum(n.parents[0],
                  Mat::Constant(pv.rows(), pv.cols(), n.grad(0, 0)));
  });
}

inline Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x.rows() * x.cols());
  return scal(sum(x), inv);
}

// ---------------------------------------------------------------------------
// softmax / losses

// Row-wise softmax. keep_col, when non-empty, marks columns that take part;
// excluded columns get probability 0. zero_row marks rows forced to all-zero
// output (padding queries).
inline Var row_softmax(const Var& x, const std::vector<char>& keep_col = {},
                       const std::vector<char>& zero_row = {}) {
  const auto n_rows = x.rows(), n_cols = x.cols();
  assert(keep_col.empty() ||
         static_cast<Eigen::Index>(keep_col.size()) == n_cols);
  assert(zero_row.empty() ||
         static_cast<Eigen::Index>(zero_row.size()) == n_rows);
  Mat y = Mat::Zero(n_rows, n_cols);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    if (!zero_row.empty() && zero_row[i]) continue;
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n_cols; ++j)
      if (keep_col.empty() || keep_col[j]) m = std::max(m, x.value()(i, j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < n_cols; ++j) {
      if (!keep_col.empty() && !keep_col[j]) continue;
      y(i, j) = std::exp(x.value()(i, j) - m);
      z += y(i, j);
    }
    for (Eigen::Index j = 0; j < n_cols; ++j) y(i, j) /= z;
  }
  return detail::make_op(std::move(y), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
      const double dot = n.grad.row(i).dot(n.value.row(i));
      g.row(i) += (n.grad.row(i).array() - dot).matrix().cwiseProduct(
          n.value.row(i));
    }
  });
}

// Sum over rows of the cross-entropy between softmax(logits) and the given
// integer labels.
inline Var cross_entropy_sum(const Var& logits,
                             const std::vector<int>& labels) {
  assert(static_cast<Eigen::Index>(labels.size()) == logits.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto row = logits.value().row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(labels[i]);
  }
  Mat y(1, 1);
  y(0, 0) = total;
  return detail::make_op(std::move(y), {logits}, [labels](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    const Mat& lv = n.parents[0]->value;
    const double go = n.grad(0, 0);
    for (Eigen::Index i = 0; i < lv.rows(); ++i) {
      const auto row = lv.row(i);
      const double m = row.maxCoeff();
      Eigen::RowVectorXd p = (row.array() - m).exp();
      p /= p.sum();
      p(labels[i]) -= 1.0;
      g.row(i) += go * p;
    }
  });
}

// ---------------------------------------------------------------------------
// shape ops

inline Var concat_cols(const std::vector<Var>& xs) {
  assert(!xs.empty());
  Eigen::Index total = 0;
  for (const auto& x : xs) total += x.cols();
  Mat y(xs[0].rows(), total);
  std::vector<Eigen::Index> widths;
  Eigen::Index off = 0;
  for (const auto& x : xs) {
    y.middleCols(off, x.cols()) = x.value();
    widths.push_back(x.cols());
    off += x.cols();
  }
  return detail::make_op(std::move(y), xs, [widths](Node& n) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      detail::accum(n.parents[k], n.grad.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

inline Var concat_rows(const std::vector<Var>& xs) {
  assert(!xs.empty());
  Eigen::Index total = 0;
  for (const auto& x : xs) total += x.rows();
  Mat y(total, xs[0].cols());
  std::vector<Eigen::Index> heights;
  Eigen::Index off = 0;
  for (const auto& x : xs) {
    y.middleRows(off, x.rows()) = x.value();
    heights.push_back(x.rows());
    off += x.rows();
  }
  return detail::make_op(std::move(y), xs, [heights](Node& n) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      detail::accum(n.parents[k], n.grad.middleRows(off, heights[k]));
      off += heights[k];
    }
  });
}

inline Var slice_cols(const Var& x, Eigen::Index c0, Eigen::Index w) {
  assert(c0 >= 0 && c0 + w <= x.cols());
  return detail::make_op(x.value().middleCols(c0, w), {x}, [c0, w](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->grad_ref().middleCols(c0, w) += n.grad;
  });
}

inline Var slice_rows(const Var& x, Eigen::Index r0, Eigen::Index h) {
  assert(r0 >= 0 && r0 + h <= x.rows());
  return detail::make_op(x.value().middleRows(r0, h), {x}, [r0, h](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->grad_ref().middleRows(r0, h) += n.grad;
  });
}

inline Var row(const Var& x, Eigen::Index i) { return slice_rows(x, i, 1); }

// Gathers rows of x by index (embedding lookup / row permutation).
inline Var gather_rows(const Var& x, std::vector<int> idx) {
  Mat y(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    assert(idx[i] >= 0 && idx[i] < x.rows());
    y.row(static_cast<Eigen::Index>(i)) = x.value().row(idx[i]);
  }
  return detail::make_op(std::move(y), {x}, [idx = std::move(idx)](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    for (std::size_t i = 0; i < idx.size(); ++i)
      g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

// Column-wise max over the inclusive row range [r0, r1].
inline Var maxpool_rows(const Var& x, Eigen::Index r0, Eigen::Index r1) {
  return col_max(slice_rows(x, r0, r1 - r0 + 1));
}

// Inverted dropout; identity when not training or p == 0.
inline Var dropout(const Var& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = keep(rng) ? scale : 0.0;
  return detail::make_op(x.value().cwiseProduct(mask), {x},
                         [mask](Node& n) {
                           detail::accum(n.parents[0],
                                         n.grad.cwiseProduct(mask));
                         });
}

}  // namespace d2e2s::ag
