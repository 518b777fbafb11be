// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth stand-ins for the learned models, answered from annotations.
// They let every ordering strategy be checked independently of training.

#ifndef ORDERVQA_ORACLE_HPP_
#define ORDERVQA_ORACLE_HPP_

#include <map>
#include <string>
#include <vector>

#include "ordervqa/composition.hpp"
#include "ordervqa/grounding.hpp"
#include "ordervqa/pairwise.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

/// Resolves image ids and captions to 1-based step indices (0 for the
/// pre-makeup image).
class StepIndex {
 public:
  explicit StepIndex(const std::vector<VideoAnnotation>& videos);
  /// Throws Error for unknown videos or items.
  int step_of(const std::string& video_id, const std::string& item) const;
  const VideoAnnotation& video(const std::string& video_id) const;

 private:
  std::map<std::string, VideoAnnotation, std::less<>> videos_;
  std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> captions_;
};

/// 1 when a's step precedes b's, else 0.
class PairwiseOracle : public PairwiseScorer {
 public:
  explicit PairwiseOracle(const std::vector<VideoAnnotation>& videos) : index_(videos) {}
  double probability(const std::string& video_id, const std::string& a,
                     const std::string& b) const override;

 private:
  StepIndex index_;
};

/// 1 when the candidate shows the step of the last caption and the source
/// precedes the first caption; with no captions, 1 when candidate and
/// source show the same step. 0 otherwise.
class CompositionOracle : public CompositionScorer {
 public:
  explicit CompositionOracle(const std::vector<VideoAnnotation>& videos) : index_(videos) {}
  double score(const std::string& video_id, const std::string& source,
               std::span<const std::string> captions,
               const std::string& candidate) const override;

 private:
  StepIndex index_;
};

/// Returns the annotated span of the caption's step with score 1.
class LocalizerOracle : public Localizer {
 public:
  explicit LocalizerOracle(const std::vector<VideoAnnotation>& videos) : index_(videos) {}
  Localization localize(const VideoClip& clip, const std::string& caption) const override;

 private:
  StepIndex index_;
};

}  // namespace ordervqa

#endif  // ORDERVQA_ORACLE_HPP_
