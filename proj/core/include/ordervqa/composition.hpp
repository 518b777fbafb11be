// SPDX-License-Identifier: Apache-2.0
//
// Text-aware image ordering. A composition model modifies a source image
// feature with the captions of the steps that follow it and ranks target
// images by similarity to the result. Greedy sorting walks the caption
// list, each time placing the image that best matches the current anchor
// modified by the next few captions.

#ifndef ORDERVQA_COMPOSITION_HPP_
#define ORDERVQA_COMPOSITION_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordervqa/checkpoint.hpp"
#include "ordervqa/io.hpp"
#include "ordervqa/layers.hpp"
#include "ordervqa/metrics.hpp"
#include "ordervqa/pairwise.hpp"
#include "ordervqa/text.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

/// Scores how well `candidate` matches `source` after applying `captions`
/// (consecutive step captions, in order). Higher is better.
class CompositionScorer {
 public:
  virtual ~CompositionScorer() = default;
  virtual double score(const std::string& video_id, const std::string& source,
                       std::span<const std::string> captions,
                       const std::string& candidate) const = 0;
  virtual std::vector<double> scores(const std::string& video_id, const std::string& source,
                                     std::span<const std::string> captions,
                                     std::span<const std::string> candidates) const;
};

class ConstantCompositionScorer : public CompositionScorer {
 public:
  explicit ConstantCompositionScorer(double s = 0.0) : s_(s) {}
  double score(const std::string&, const std::string&, std::span<const std::string>,
               const std::string&) const override {
    return s_;
  }

 private:
  double s_;
};

struct CompositionTriplet {
  std::string video_id;
  std::string source;
  std::vector<std::string> captions;
  std::string target;
  /// Captions joined by single spaces.
  std::string text() const;
  friend bool operator==(const CompositionTriplet&, const CompositionTriplet&) = default;
};

/// Splits the video's steps into `n_parts` random contiguous parts (0 means
/// half the step count, at least 1) and emits one triplet per part: the
/// image at the end of the step before the part, the part's captions, and
/// the image at the end of the part. Returns nothing when the video has
/// fewer steps than parts.
std::vector<CompositionTriplet> build_triplets(const VideoAnnotation& video, int n_parts,
                                               std::uint64_t seed, double fps = 25.0);

/// {"triplets": [{"video_id", "source", "captions": [..], "target"}]}.
std::string format_triplets(std::span<const CompositionTriplet> triplets);
/// Throws ParseError on malformed documents.
std::vector<CompositionTriplet> parse_triplets(std::string_view text);

/// Step-end image ids of every step, in order (retrieval candidates).
std::vector<std::string> step_end_images(const VideoAnnotation& video, double fps = 25.0);

struct CompositionConfig {
  int embed_dim = 64;
  int text_hidden = 512;
  /// Width of the shared image projection; 0 keeps the feature width.
  int joint_dim = 0;
  int max_tokens = 40;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  /// Initial multiplier of the cosine similarity (learned afterwards).
  double init_scale = 4.0;
  /// Random splits drawn per training video.
  int splits_per_video = 2;
  /// Parts per split; 0 means half the step count.
  int n_parts = 0;
  std::uint64_t seed = 0;
};

class CompositionModel : public CompositionScorer {
 public:
  CompositionModel(const CompositionConfig& config, const FeatureStore* features,
                   Vocabulary vocab);

  const CompositionConfig& config() const { return config_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  void set_features(const FeatureStore* features) { features_ = features; }

  /// Raw feature rows of `ids`.
  nn::Var features(std::span<const std::string> ids) const;
  /// Shared image projection.
  nn::Var project(const nn::Var& x) const;
  /// Sentence encoding (1 x text_hidden).
  nn::Var encode_text(const std::string& text) const;
  /// Modified source feature: a gated copy of the projected source plus a
  /// residual, both conditioned on the text. Empty text returns the
  /// projected source unchanged.
  nn::Var compose(const nn::Var& source, const std::string& text) const;
  /// Scaled cosine between each composed row and each target row.
  nn::Var similarity(const nn::Var& composed, const nn::Var& targets) const;
  double scale() const;

  double score(const std::string& video_id, const std::string& source,
               std::span<const std::string> captions,
               const std::string& candidate) const override;
  std::vector<double> scores(const std::string& video_id, const std::string& source,
                             std::span<const std::string> captions,
                             std::span<const std::string> candidates) const override;

  /// Softmax contrastive loss of a batch: each triplet's positive is its
  /// target; the other distinct targets of the batch are its negatives.
  nn::Var batch_loss(std::span<const CompositionTriplet* const> batch) const;

  Checkpoint to_checkpoint(const nlohmann::json& log) const;
  static CompositionModel from_checkpoint(const Checkpoint& ckpt, const FeatureStore* features);

 private:
  CompositionConfig config_;
  const FeatureStore* features_;
  Vocabulary vocab_;
  nn::Linear proj_;
  nn::Embedding embedding_;
  nn::Lstm lstm_;
  nn::Linear gate1_, gate2_, res1_, res2_;
  nn::Var w_gate_, w_res_, log_scale_;
  nn::ParameterSet params_;
};

/// Trains with Adam. Batches hold whole videos so that same-video images
/// serve as negatives. Throws ValidationError for batch sizes below two and
/// NumericError on a non-finite loss.
nlohmann::json train_composition(CompositionModel& model,
                                 std::span<const CompositionTriplet> triplets);

/// Per-video R@k: each query ranks every step-end image of its video.
struct RetrievalQuery {
  CompositionTriplet triplet;
  std::vector<std::string> candidates;
};
std::vector<std::vector<RankedQuery>> rank_queries(
    const CompositionScorer& scorer, const std::vector<std::vector<RetrievalQuery>>& per_video);

// ---------------------------------------------------------------------------
// Greedy sorting

struct GreedySortOptions {
  /// The first placed image is taken to have consumed the first caption, so
  /// caption allotment starts from the second one.
  bool first_image_consumes_caption = true;
  /// Use the loop bound exactly as printed, j < M - (N - x) with x images
  /// placed; errors whenever it leaves no caption range to try.
  bool literal_bound = false;
};

/// Orders `images` (returns presentation indices, earliest first) using
/// `pairwise` to choose the first image and `composition` to extend the
/// sequence one image at a time from consecutive caption ranges. Each
/// choice maximizes the score over (image, caption range end); ties go to
/// the shorter range, then to the earlier image. Throws ValidationError if
/// there are too few captions for the images.
std::vector<int> greedy_sort(const std::string& video_id, std::span<const std::string> images,
                             std::span<const std::string> captions,
                             const PairwiseScorer& pairwise,
                             const CompositionScorer& composition,
                             const GreedySortOptions& options = {},
                             std::vector<int>* chosen_ends = nullptr);

/// Candidate closest to `predicted` in edit distance; lowest index on ties.
int select_answer_by_edit_distance(const Permutation5& predicted, const OrderingQuestion& q);

/// greedy_sort over the question's images and captions, then edit-distance
/// selection. Throws ValidationError if the question carries no captions.
int select_answer_greedy(const PairwiseScorer& pairwise, const CompositionScorer& composition,
                         const OrderingQuestion& q, const GreedySortOptions& options = {});

}  // namespace ordervqa

#endif  // ORDERVQA_COMPOSITION_HPP_
