// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics and report assembly.

#ifndef ORDERVQA_METRICS_HPP_
#define ORDERVQA_METRICS_HPP_

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordervqa/io.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

/// Temporal intersection over union of two spans; 0 when disjoint.
double tiou(const TemporalSpan& a, const TemporalSpan& b);
/// Same on raw intervals, which may extend below zero (anchors do).
double interval_tiou(double a_start, double a_end, double b_start, double b_end);

/// Unit-cost insert/delete/substitute edit distance.
template <typename T>
int levenshtein(std::span<const T> a, std::span<const T> b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline int levenshtein(const Permutation5& a, const Permutation5& b) {
  return levenshtein<int>(a.order(), b.order());
}

/// Fraction of keyed questions answered correctly. Throws ValidationError
/// naming the first missing or extra qid.
double multi_choice_accuracy(const Predictions& predictions, const Predictions& key);

/// One retrieval query: candidates sorted best-first and the true target.
struct RankedQuery {
  std::vector<std::string> ranked;
  std::string target;
};

/// Per video, the fraction of queries whose target is in the top k; then
/// the unweighted mean over videos. Throws on an empty video.
double recall_at_k_retrieval(const std::vector<std::vector<RankedQuery>>& per_video,
                             int k);

/// Fraction of queries where one of the top-k predicted spans (best-first)
/// reaches tIoU >= m with the groundtruth. Throws if a query has fewer than
/// k predictions.
double recall_at_k_tiou(const std::vector<std::vector<TemporalSpan>>& predictions,
                        const std::vector<TemporalSpan>& groundtruths, int k, double m);

/// Mean tIoU of each query's top prediction.
double mean_iou(const std::vector<std::vector<TemporalSpan>>& predictions,
                const std::vector<TemporalSpan>& groundtruths);

struct EvalReport {
  std::string task;
  int n = 0;
  double accuracy = 0.0;
  std::optional<std::map<std::string, double>> per_gap;
  std::optional<std::map<std::string, double>> recall;
  std::map<std::string, double> extra_raw;

  /// Display fields are percentages rounded to two decimals; "raw" keeps
  /// full-precision fractions.
  nlohmann::json to_json() const;
};

/// Buckets step gaps >= 5 together under ">=5".
std::string gap_bucket(int gap);

}  // namespace ordervqa

#endif  // ORDERVQA_METRICS_HPP_
