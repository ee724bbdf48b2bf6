#pragma once

// Candidate span enumeration, span representations, mention-type filtering,
// and the per-type candidate selection that feeds pair classification.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"
#include "d2e2s/corpus.hpp"
#include "d2e2s/nn.hpp"

namespace d2e2s {

struct SpanBudget {
  int max_span_length = 8;
  double keep_ratio = 0.5;

  void validate() const {
    if (max_span_length < 1)
      throw ConfigError("max_span_length must be >= 1");
    if (!(keep_ratio > 0.0) || keep_ratio > 1.0)
      throw ConfigError("keep_ratio must be in (0, 1]");
  }

  // Per-type cap on kept candidates for a sentence of n words.
  int cap(int n_words) const {
    return std::max(1, static_cast<int>(std::ceil(keep_ratio * n_words)));
  }
};

enum class MentionType { kTarget = 0, kOpinion = 1, kNone = 2 };
inline constexpr int kMentionClasses = 3;

// All (start, end) pairs with width <= max_len, start-major.
inline std::vector<Span> enumerate_spans(int n_words, int max_len) {
  if (n_words < 1 || max_len < 1)
    throw ConfigError("enumerate_spans needs n >= 1 and max length >= 1");
  std::vector<Span> spans;
  for (int start = 0; start < n_words; ++start)
    for (int end = start; end < n_words && end - start < max_len; ++end)
      spans.push_back({start, end});
  return spans;
}

// Widths 1..max_span_length map to embedding rows 0..max_span_length-1.
inline int width_bucket(const Span& s) { return s.end - s.start; }

// Mention label per span: Target beats Opinion when a span plays both roles.
inline std::vector<int> gold_mention_labels(
    const std::vector<Span>& spans, const std::vector<Triplet>& gold) {
  std::vector<int> labels(spans.size(),
                          static_cast<int>(MentionType::kNone));
  for (std::size_t i = 0; i < spans.size(); ++i) {
    bool target = false, opinion = false;
    for (const Triplet& t : gold) {
      target |= t.aspect == spans[i];
      opinion |= t.opinion == spans[i];
    }
    if (target)
      labels[i] = static_cast<int>(MentionType::kTarget);
    else if (opinion)
      labels[i] = static_cast<int>(MentionType::kOpinion);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// SpanExtractor: representation s = maxpool(H_out[start..end]) (+) width
// embedding (+) sentence cls vector, then a small classifier over
// {Target, Opinion, None}.

struct ScoredSpans {
  std::vector<Span> spans;
  ag::Var reprs;   // S x (d_out + d_width + d_cls)
  ag::Var logits;  // S x 3
};

class SpanExtractor {
 public:
  SpanExtractor() = default;
  SpanExtractor(nn::ParamRegistry& reg, const std::string& name,
                Eigen::Index d_out, Eigen::Index d_cls, Eigen::Index d_width,
                Eigen::Index hidden, const SpanBudget& budget, Rng& rng)
      : budget_(budget) {
    budget_.validate();
    width_emb_ = nn::Embedding(reg, name + ".width", budget_.max_span_length,
                               d_width, rng);
    classifier_ = nn::Mlp(reg, name + ".cls",
                          {d_out + d_width + d_cls, hidden, kMentionClasses},
                          rng);
  }

  const SpanBudget& budget() const { return budget_; }

  // One representation row per span, in the spans' order.
  ag::Var reprs(const std::vector<Span>& spans, const ag::Var& h_out,
                const ag::Var& cls) const {
    std::vector<int> buckets;
    buckets.reserve(spans.size());
    std::vector<ag::Var> pooled;
    pooled.reserve(spans.size());
    for (const Span& s : spans) {
      buckets.push_back(width_bucket(s));
      pooled.push_back(ag::maxpool_rows(h_out, s.start, s.end));
    }
    ag::Var pool = ag::concat_rows(pooled);
    ag::Var widths = width_emb_.forward(buckets);
    ag::Var cls_rows = ag::matmul(
        ag::constant(ag::Mat::Ones(static_cast<Eigen::Index>(spans.size()), 1)),
        cls);
    return ag::concat_cols({pool, widths, cls_rows});
  }

  ScoredSpans score(const std::vector<Span>& spans, const ag::Var& h_out,
                    const ag::Var& cls) const {
    ScoredSpans out;
    out.spans = spans;
    out.reprs = reprs(spans, h_out, cls);
    out.logits = classifier_.forward(out.reprs);
    return out;
  }

  // Summed cross-entropy over all enumerated spans of one sentence.
  ag::Var filter_loss(const ScoredSpans& scored,
                      const std::vector<Triplet>& gold) const {
    return ag::cross_entropy_sum(scored.logits,
                                 gold_mention_labels(scored.spans, gold));
  }

 private:
  SpanBudget budget_;
  nn::Embedding width_emb_;
  nn::Mlp classifier_;
};

// ---------------------------------------------------------------------------
// Candidate selection: spans whose argmax mention type is Target (resp.
// Opinion), capped per type by descending probability; ties prefer smaller
// start, then smaller end.

struct Selection {
  std::vector<int> targets;   // indices into the scored span list
  std::vector<int> opinions;
};

inline Selection select_candidates(const ScoredSpans& scored, int n_words,
                                   const SpanBudget& budget) {
  struct Ranked {
    double score;
    int index;
  };
  std::vector<Ranked> targets, opinions;
  const ag::Mat& logits = scored.logits.value();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double m = row.maxCoeff();
    Eigen::ArrayXd p = (row.array() - m).exp();
    p /= p.sum();
    Eigen::Index cls = 0;
    p.maxCoeff(&cls);
    if (cls == static_cast<Eigen::Index>(MentionType::kTarget))
      targets.push_back({p(cls), static_cast<int>(i)});
    else if (cls == static_cast<Eigen::Index>(MentionType::kOpinion))
      opinions.push_back({p(cls), static_cast<int>(i)});
  }
  auto rank = [&](std::vector<Ranked>& v) {
    std::sort(v.begin(), v.end(), [&](const Ranked& a, const Ranked& b) {
      if (a.score != b.score) return a.score > b.score;
      return scored.spans[static_cast<std::size_t>(a.index)] <
             scored.spans[static_cast<std::size_t>(b.index)];
    });
    const std::size_t cap = static_cast<std::size_t>(budget.cap(n_words));
    if (v.size() > cap) v.resize(cap);
  };
  rank(targets);
  rank(opinions);
  Selection sel;
  for (const Ranked& r : targets) sel.targets.push_back(r.index);
  for (const Ranked& r : opinions) sel.opinions.push_back(r.index);
  return sel;
}

}  // namespace d2e2s
