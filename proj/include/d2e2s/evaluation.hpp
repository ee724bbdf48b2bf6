#pragma once

// Exact-match triplet scoring: precision/recall/F1 overall and per polarity,
// with JSON and plain-text report rendering.

#include <algorithm>
#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2e2s/common.hpp"
#include "d2e2s/corpus.hpp"

namespace d2e2s {

struct MetricRow {
  long gold = 0;
  long predicted = 0;
  long matched = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  void finalize() {
    precision = predicted > 0 ? static_cast<double>(matched) / predicted : 0.0;
    recall = gold > 0 ? static_cast<double>(matched) / gold : 0.0;
    f1 = (precision + recall) > 0.0
             ? 2.0 * precision * recall / (precision + recall)
             : 0.0;
  }
};

struct EvalReport {
  MetricRow overall;
  std::array<MetricRow, 3> by_polarity;  // indexed by Polarity

  const MetricRow& row(Polarity p) const {
    return by_polarity[static_cast<std::size_t>(p)];
  }
};

namespace detail {

// Multiset intersection size; each gold triplet matches at most once.
inline long count_matches(std::vector<Triplet> predicted,
                          std::vector<Triplet> gold) {
  std::sort(predicted.begin(), predicted.end());
  std::sort(gold.begin(), gold.end());
  std::vector<Triplet> matched;
  std::set_intersection(predicted.begin(), predicted.end(), gold.begin(),
                        gold.end(), std::back_inserter(matched));
  return static_cast<long>(matched.size());
}

inline void accumulate(MetricRow& row, const std::vector<Triplet>& predicted,
                       const std::vector<Triplet>& gold) {
  row.gold += static_cast<long>(gold.size());
  row.predicted += static_cast<long>(predicted.size());
  row.matched += count_matches(predicted, gold);
}

}  // namespace detail

// predicted/gold hold one triplet list per sentence, aligned by position.
// A prediction counts iff aspect span, opinion span, and polarity all match;
// duplicate predictions within a sentence count once.
inline EvalReport score(std::vector<std::vector<Triplet>> predicted,
                        const std::vector<std::vector<Triplet>>& gold) {
  if (predicted.size() != gold.size())
    throw IdMismatchError("prediction/gold sentence counts differ: " +
                          std::to_string(predicted.size()) + " vs " +
                          std::to_string(gold.size()));
  EvalReport report;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    std::vector<Triplet>& pred = predicted[i];
    std::sort(pred.begin(), pred.end());
    pred.erase(std::unique(pred.begin(), pred.end()), pred.end());

    detail::accumulate(report.overall, pred, gold[i]);
    for (Polarity p : {Polarity::NEU, Polarity::POS, Polarity::NEG}) {
      auto only = [p](const std::vector<Triplet>& ts) {
        std::vector<Triplet> kept;
        for (const Triplet& t : ts)
          if (t.polarity == p) kept.push_back(t);
        return kept;
      };
      detail::accumulate(report.by_polarity[static_cast<std::size_t>(p)],
                         only(pred), only(gold[i]));
    }
  }
  report.overall.finalize();
  for (MetricRow& row : report.by_polarity) row.finalize();
  return report;
}

inline nlohmann::json report_json(const EvalReport& report) {
  auto row_json = [](const MetricRow& r) {
    return nlohmann::json{{"precision", r.precision}, {"recall", r.recall},
                          {"f1", r.f1},               {"gold", r.gold},
                          {"predicted", r.predicted}, {"matched", r.matched}};
  };
  nlohmann::json j{{"overall", row_json(report.overall)}};
  for (Polarity p : {Polarity::POS, Polarity::NEU, Polarity::NEG})
    j[to_string(p)] = row_json(report.row(p));
  return j;
}

// Aligned fixed-width table with P / R / F1 columns.
inline std::string report_table(const EvalReport& report) {
  std::string out = "         P       R       F1     gold    pred   match\n";
  auto line = [&out](const std::string& label, const MetricRow& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-7s %6.4f  %6.4f  %6.4f  %6ld  %6ld  %6ld\n",
                  label.c_str(), r.precision, r.recall, r.f1, r.gold,
                  r.predicted, r.matched);
    out += buf;
  };
  line("overall", report.overall);
  for (Polarity p : {Polarity::POS, Polarity::NEU, Polarity::NEG})
    line(to_string(p), report.row(p));
  return out;
}

}  // namespace d2e2s
