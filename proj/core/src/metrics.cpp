// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/metrics.hpp"

#include <cmath>

namespace ordervqa {

double interval_tiou(double a_start, double a_end, double b_start, double b_end) {
  const double inter = std::min(a_end, b_end) - std::max(a_start, b_start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a_end, b_end) - std::min(a_start, b_start);
  return uni > 0.0 ? inter / uni : 0.0;
}

double tiou(const TemporalSpan& a, const TemporalSpan& b) {
  return interval_tiou(a.start_s, a.end_s, b.start_s, b.end_s);
}

double multi_choice_accuracy(const Predictions& predictions, const Predictions& key) {
  for (const auto& [qid, choice] : predictions) {
    if (!key.contains(qid)) {
      throw ValidationError("prediction for unknown question id '" + qid + "'");
    }
  }
  if (key.empty()) throw ValidationError("answer key is empty");
  std::size_t correct = 0;
  for (const auto& [qid, answer] : key) {
    auto it = predictions.find(qid);
    if (it == predictions.end()) {
      throw ValidationError("missing prediction for question id '" + qid + "'");
    }
    if (it->second == answer) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(key.size());
}

double recall_at_k_retrieval(const std::vector<std::vector<RankedQuery>>& per_video,
                             int k) {
  if (per_video.empty()) throw ValidationError("recall_at_k_retrieval: no videos");
  double total = 0.0;
  for (std::size_t v = 0; v < per_video.size(); ++v) {
    const auto& queries = per_video[v];
    if (queries.empty()) {
      throw ValidationError("recall_at_k_retrieval: video " + std::to_string(v) +
                            " has no queries");
    }
    std::size_t hits = 0;
    for (const auto& q : queries) {
      const auto limit = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)),
                                               q.ranked.size());
      if (std::find(q.ranked.begin(), q.ranked.begin() + static_cast<std::ptrdiff_t>(limit),
                    q.target) != q.ranked.begin() + static_cast<std::ptrdiff_t>(limit)) {
        ++hits;
      }
    }
    total += static_cast<double>(hits) / static_cast<double>(queries.size());
  }
  return total / static_cast<double>(per_video.size());
}

double recall_at_k_tiou(const std::vector<std::vector<TemporalSpan>>& predictions,
                        const std::vector<TemporalSpan>& groundtruths, int k, double m) {
  if (predictions.size() != groundtruths.size() || predictions.empty()) {
    throw ValidationError("recall_at_k_tiou: need one prediction list per groundtruth");
  }
  if (k < 1) throw ValidationError("recall_at_k_tiou: k must be positive");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() < static_cast<std::size_t>(k)) {
      throw ValidationError("recall_at_k_tiou: query " + std::to_string(i) + " has " +
                            std::to_string(predictions[i].size()) +
                            " predictions, k = " + std::to_string(k));
    }
    for (int j = 0; j < k; ++j) {
      if (tiou(predictions[i][static_cast<std::size_t>(j)], groundtruths[i]) >= m) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double mean_iou(const std::vector<std::vector<TemporalSpan>>& predictions,
                const std::vector<TemporalSpan>& groundtruths) {
  if (predictions.size() != groundtruths.size() || predictions.empty()) {
    throw ValidationError("mean_iou: need one prediction list per groundtruth");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].empty()) {
      throw ValidationError("mean_iou: query " + std::to_string(i) + " has no prediction");
    }
    total += tiou(predictions[i].front(), groundtruths[i]);
  }
  return total / static_cast<double>(predictions.size());
}

std::string gap_bucket(int gap) { return gap >= 5 ? ">=5" : std::to_string(gap); }

namespace {

double display(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json doc = {{"task", task}, {"n", n}, {"accuracy", display(accuracy)}};
  nlohmann::json raw = {{"accuracy", accuracy}};
  if (per_gap) {
    nlohmann::json shown = nlohmann::json::object();
    nlohmann::json exact = nlohmann::json::object();
    for (const auto& [gap, acc] : *per_gap) {
      shown[gap] = display(acc);
      exact[gap] = acc;
    }
    doc["per_gap"] = std::move(shown);
    raw["per_gap"] = std::move(exact);
  }
  if (recall) {
    nlohmann::json shown = nlohmann::json::object();
    nlohmann::json exact = nlohmann::json::object();
    for (const auto& [name, value] : *recall) {
      shown[name] = display(value);
      exact[name] = value;
    }
    doc["recall"] = std::move(shown);
    raw["recall"] = std::move(exact);
  }
  for (const auto& [name, value] : extra_raw) raw[name] = value;
  doc["raw"] = std::move(raw);
  return doc;
}

}  // namespace ordervqa
