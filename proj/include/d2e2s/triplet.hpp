#pragma once

// Pair representations over kept target/opinion candidates, four-way
// sentiment-relation classification, and triplet decoding.

#include <algorithm>
#include <string>
#include <vector>

#include "d2e2s/autograd.hpp"
#include "d2e2s/common.hpp"
#include "d2e2s/corpus.hpp"
#include "d2e2s/nn.hpp"
#include "d2e2s/spans.hpp"

namespace d2e2s {

enum class Relation { kPos = 0, kNeg = 1, kNeu = 2, kInvalid = 3 };
inline constexpr int kRelationClasses = 4;

inline Polarity relation_polarity(Relation r) {
  switch (r) {
    case Relation::kPos: return Polarity::POS;
    case Relation::kNeg: return Polarity::NEG;
    case Relation::kNeu: return Polarity::NEU;
    default: throw Error("invalid relation has no polarity");
  }
}

inline Relation polarity_relation(Polarity p) {
  switch (p) {
    case Polarity::POS: return Relation::kPos;
    case Polarity::NEG: return Relation::kNeg;
    default: return Relation::kNeu;
  }
}

// Tokens strictly between the nearest ends of the two spans; 0 when they
// touch or overlap.
inline int pair_gap(const Span& a, const Span& b) {
  if (a.end < b.start) return b.start - a.end - 1;
  if (b.end < a.start) return a.start - b.end - 1;
  return 0;
}

// Gap buckets: 0,1,2,3,4 singleton, then 5-7, 8-15, 16+.
inline int pair_width_bucket(const Span& a, const Span& b) {
  const int gap = pair_gap(a, b);
  if (gap <= 4) return gap;
  if (gap <= 7) return 5;
  if (gap <= 15) return 6;
  return 7;
}
inline constexpr int kPairWidthBuckets = 8;

// One aspect-candidate x opinion-candidate pairing.
struct PairCandidate {
  int aspect_index = 0;   // index into the scored span list
  int opinion_index = 0;
  Span aspect, opinion;
  int width_bucket = 0;
};

// Full cross product of kept targets and kept opinions, in selection order.
inline std::vector<PairCandidate> enumerate_pairs(const ScoredSpans& scored,
                                                  const Selection& sel) {
  std::vector<PairCandidate> pairs;
  pairs.reserve(sel.targets.size() * sel.opinions.size());
  for (int t : sel.targets)
    for (int o : sel.opinions) {
      const Span& a = scored.spans[static_cast<std::size_t>(t)];
      const Span& op = scored.spans[static_cast<std::size_t>(o)];
      pairs.push_back({t, o, a, op, pair_width_bucket(a, op)});
    }
  return pairs;
}

// Gold relation per pair; Invalid unless the exact (aspect, opinion) pair
// appears in a gold triplet.
inline std::vector<int> gold_relation_labels(
    const std::vector<PairCandidate>& pairs,
    const std::vector<Triplet>& gold) {
  std::vector<int> labels(pairs.size(),
                          static_cast<int>(Relation::kInvalid));
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (const Triplet& t : gold)
      if (t.aspect == pairs[i].aspect && t.opinion == pairs[i].opinion) {
        labels[i] = static_cast<int>(polarity_relation(t.polarity));
        break;
      }
  return labels;
}

// ---------------------------------------------------------------------------
// TripletClassifier: T = s_aspect (+) pair-width embedding (+) cls
// (+) s_opinion, in exactly that order, then a classifier over
// {POS, NEG, NEU, Invalid}.

struct ScoredPairs {
  std::vector<PairCandidate> pairs;
  ag::Var logits;  // P x 4; undefined when pairs is empty
};

class TripletClassifier {
 public:
  TripletClassifier() = default;
  TripletClassifier(nn::ParamRegistry& reg, const std::string& name,
                    Eigen::Index d_span, Eigen::Index d_cls,
                    Eigen::Index d_width, Eigen::Index hidden, Rng& rng) {
    width_emb_ =
        nn::Embedding(reg, name + ".width", kPairWidthBuckets, d_width, rng);
    classifier_ = nn::Mlp(
        reg, name + ".cls",
        {2 * d_span + d_width + d_cls, hidden, kRelationClasses}, rng);
  }

  // One row per pair: s_aspect (+) width embedding (+) cls (+) s_opinion.
  ag::Var pair_reprs(const std::vector<PairCandidate>& pairs,
                     const ScoredSpans& scored, const ag::Var& cls) const {
    std::vector<int> aspects, opinions, buckets;
    aspects.reserve(pairs.size());
    opinions.reserve(pairs.size());
    buckets.reserve(pairs.size());
    for (const PairCandidate& p : pairs) {
      aspects.push_back(p.aspect_index);
      opinions.push_back(p.opinion_index);
      buckets.push_back(p.width_bucket);
    }
    ag::Var ones = ag::constant(
        ag::Mat::Ones(static_cast<Eigen::Index>(pairs.size()), 1));
    return ag::concat_cols({ag::gather_rows(scored.reprs, aspects),
                            width_emb_.forward(buckets),
                            ag::matmul(ones, cls),
                            ag::gather_rows(scored.reprs, opinions)});
  }

  ScoredPairs score(const std::vector<PairCandidate>& pairs,
                    const ScoredSpans& scored, const ag::Var& cls) const {
    ScoredPairs out;
    out.pairs = pairs;
    if (pairs.empty()) return out;
    out.logits = classifier_.forward(pair_reprs(pairs, scored, cls));
    return out;
  }

  // Summed cross-entropy over the pair cross product; zero when no pairs.
  ag::Var loss(const ScoredPairs& scored,
               const std::vector<Triplet>& gold) const {
    if (scored.pairs.empty()) return ag::constant(ag::Mat::Zero(1, 1));
    return ag::cross_entropy_sum(scored.logits,
                                 gold_relation_labels(scored.pairs, gold));
  }

 private:
  nn::Embedding width_emb_;
  nn::Mlp classifier_;
};

// Emit a triplet for every pair whose argmax relation is a real polarity;
// exact duplicates collapse to one.
inline std::vector<Triplet> decode(const ScoredPairs& scored) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < scored.pairs.size(); ++i) {
    Eigen::Index cls = 0;
    scored.logits.value().row(static_cast<Eigen::Index>(i)).maxCoeff(&cls);
    if (cls == static_cast<Eigen::Index>(Relation::kInvalid)) continue;
    out.push_back({scored.pairs[i].aspect, scored.pairs[i].opinion,
                   relation_polarity(static_cast<Relation>(cls))});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace d2e2s
