// SPDX-License-Identifier: Apache-2.0
//
// Builds facial-image-ordering and step-ordering multi-choice questions from
// annotations. Output depends only on (annotations, options).

#ifndef ORDERVQA_QUESTION_GEN_HPP_
#define ORDERVQA_QUESTION_GEN_HPP_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ordervqa/io.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

// Question counts of the public challenge splits.
inline constexpr int kValidationImageQuestions = 1200;
inline constexpr int kValidationStepQuestions = 1800;
inline constexpr int kTestImageQuestions = 1500;
inline constexpr int kTestStepQuestions = 3200;

inline constexpr int kMinStepsPerQuestionVideo = 5;

struct QuestionGenOptions {
  int n_questions = kValidationImageQuestions;
  std::uint64_t seed = 0;
  /// Max questions drawn from one video; 0 means ceil(n / eligible videos).
  int per_video_cap = 0;
  /// Frame rate used to name step-end images.
  double fps = 25.0;
  std::set<std::string> excluded_video_ids;
  /// Image ordering: ship the five pictured steps' captions with the question.
  bool include_captions = true;
};

/// Questions whose items are five step-end facial images of one video.
QuestionSet gen_image_ordering(const std::vector<VideoAnnotation>& videos,
                               const QuestionGenOptions& options);

/// Questions whose items are five step captions of one video.
QuestionSet gen_step_ordering(const std::vector<VideoAnnotation>& videos,
                              const QuestionGenOptions& options);

/// Index of the candidate that restores chronological order, judged by
/// brute force against the annotation; nullopt unless exactly one does.
std::optional<int> chronological_candidate(const OrderingQuestion& q,
                                           const VideoAnnotation& video);

/// Chronological step index of each item (image id or caption) of `q`.
std::array<int, 5> item_steps(const OrderingQuestion& q, const VideoAnnotation& video);

/// Smallest step gap between chronologically adjacent items; the hardest
/// pair of the question. Used to bucket multi-choice accuracy by gap.
int smallest_step_gap(const OrderingQuestion& q, const VideoAnnotation& video);

}  // namespace ordervqa

#endif  // ORDERVQA_QUESTION_GEN_HPP_
