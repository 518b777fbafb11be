// SPDX-License-Identifier: Apache-2.0
//
// Siamese pairwise ordering: a shared encoder embeds two items (facial
// images or step captions), a small classifier reads the concatenation and
// predicts whether the first item happens earlier. A permutation is scored
// by averaging the predictions over its ten implied pairs.

#ifndef ORDERVQA_PAIRWISE_HPP_
#define ORDERVQA_PAIRWISE_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordervqa/checkpoint.hpp"
#include "ordervqa/io.hpp"
#include "ordervqa/layers.hpp"
#include "ordervqa/text.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

/// P(a happens before b) for two items of one video.
class PairwiseScorer {
 public:
  virtual ~PairwiseScorer() = default;
  virtual double probability(const std::string& video_id, const std::string& a,
                             const std::string& b) const = 0;
  /// p[i][j] = probability(items[i], items[j]); the diagonal is unused.
  virtual std::array<std::array<double, 5>, 5> matrix(
      const std::string& video_id, const std::array<std::string, 5>& items) const;
};

/// Returns the same probability for every pair.
class ConstantPairwiseScorer : public PairwiseScorer {
 public:
  explicit ConstantPairwiseScorer(double p = 0.5) : p_(p) {}
  double probability(const std::string&, const std::string&,
                     const std::string&) const override {
    return p_;
  }

 private:
  double p_;
};

/// Mean probability over the ten ordered pairs implied by `perm`.
double candidate_score(const std::array<std::array<double, 5>, 5>& p,
                       const Permutation5& perm);
double candidate_score(const PairwiseScorer& scorer, const Permutation5& perm,
                       const std::string& video_id, const std::array<std::string, 5>& items);

/// Candidate with the highest score; the lowest index wins ties.
int select_answer_pairwise(const PairwiseScorer& scorer, const OrderingQuestion& q);
/// Same rule on precomputed candidate scores.
int argmax_lowest(std::span<const double> scores);

// ---------------------------------------------------------------------------
// Pair datasets

enum class ItemKind { kImage, kCaption };

struct PairSample {
  std::string video_id;
  std::string item_a;
  std::string item_b;
  int label = 0;  // 1 iff item_a comes first
  int step_gap = 0;
  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct PairDatasetOptions {
  ItemKind kind = ItemKind::kImage;
  std::uint64_t seed = 0;
  /// Unordered step pairs drawn per video; 0 keeps every pair.
  int max_pairs_per_video = 0;
  double fps = 25.0;
};

/// Pairs of distinct steps from the same video, each emitted in both
/// orientations so labels are exactly balanced. Videos with fewer than two
/// steps contribute nothing. Output order is shuffled under the seed.
std::vector<PairSample> build_pair_dataset(const std::vector<VideoAnnotation>& videos,
                                           const PairDatasetOptions& options);

/// Training pools from easy (large gap) to hard: pool k holds every pair
/// whose gap is at least the gap at position ceil(k n / phases) - 1 of the
/// descending gap list. The last pool is the whole dataset.
std::vector<std::vector<std::size_t>> curriculum_schedule(std::span<const PairSample> data,
                                                          int n_phases);

struct PairOutcome {
  int step_gap = 0;
  bool correct = false;
};

/// Accuracy per step-gap bucket ("1".."4", ">=5").
std::map<std::string, double> stepgap_accuracy(std::span<const PairOutcome> results);

// ---------------------------------------------------------------------------
// Learned comparator

struct PairwiseConfig {
  ItemKind kind = ItemKind::kImage;
  std::vector<int> hidden = {256, 64};
  int embed_dim = 64;
  int text_hidden = 64;
  int max_tokens = 20;
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int curriculum_phases = 1;
  int epochs_per_phase = 2;
  std::uint64_t seed = 0;
};

class PairwiseComparator : public PairwiseScorer {
 public:
  /// Image comparator over `features` (which must outlive the model).
  PairwiseComparator(const PairwiseConfig& config, const FeatureStore* features);
  /// Caption comparator; the vocabulary is fixed at construction.
  PairwiseComparator(const PairwiseConfig& config, Vocabulary vocab);

  const PairwiseConfig& config() const { return config_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  void set_features(const FeatureStore* features) { features_ = features; }

  /// One row per item.
  nn::Var encode(std::span<const std::string> items) const;
  /// Logit that a comes first, for each (a, b) row pair of the encodings.
  nn::Var logits(const nn::Var& ea, const nn::Var& eb) const;

  double probability(const std::string& video_id, const std::string& a,
                     const std::string& b) const override;
  std::array<std::array<double, 5>, 5> matrix(
      const std::string& video_id, const std::array<std::string, 5>& items) const override;

  Checkpoint to_checkpoint(const nlohmann::json& log) const;
  static PairwiseComparator from_checkpoint(const Checkpoint& ckpt,
                                            const FeatureStore* features);

 private:
  void build(Rng& rng, Eigen::Index input_dim);

  PairwiseConfig config_;
  const FeatureStore* features_ = nullptr;
  Vocabulary vocab_;
  nn::Embedding embedding_;
  nn::BiGru gru_;
  std::vector<nn::Linear> mlp_;
  nn::ParameterSet params_;
};

/// Fraction of pairs whose predicted side of 0.5 matches the label; a
/// probability of exactly 0.5 counts as "not earlier".
double pair_accuracy(const PairwiseScorer& scorer, std::span<const PairSample> data,
                     std::vector<PairOutcome>* outcomes = nullptr);

/// Minimizes binary cross-entropy with Adam, following the curriculum
/// pacing in the config. Returns the log: one entry per epoch with the mean
/// loss, the pool size and validation accuracy (when `validation` is
/// non-empty). Throws NumericError on a non-finite loss.
nlohmann::json train_pairwise(PairwiseComparator& model, std::span<const PairSample> train,
                              std::span<const PairSample> validation);

}  // namespace ordervqa

#endif  // ORDERVQA_PAIRWISE_HPP_
