// SPDX-License-Identifier: Apache-2.0
//
// Readers and writers for every file the toolkit exchanges:
//
//   annotations  {"videos":[{"video_id","duration_s","steps":[...]}]}
//   questions    {"task", "questions":[{"qid","video_id","items","candidates","answer"?}]}
//   predictions  {"<qid>": choice, ...}     (answer keys use the same layout)
//   features     binary "OVQF" store of float32 little-endian vectors
//   localizations {"<id>": {"start_s","end_s","score"}}
//
// Readers are pure. All JSON readers reject trailing garbage; parse errors
// carry the byte offset of the first offending byte.

#ifndef ORDERVQA_IO_HPP_
#define ORDERVQA_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordervqa/types.hpp"

namespace ordervqa {

// ---------------------------------------------------------------------------
// Frame sampling

inline constexpr int kFramesPerClip = 10;
/// Clips shorter than this (seconds) are sampled on consecutive frames.
inline constexpr double kLongClipSeconds = 10.0;
inline constexpr int kLongClipFrameGap = 5;

struct FrameSamplePlan {
  std::string video_id;
  int step_index = 0;
  /// Ten frame numbers, walking backwards from the clip's last frame.
  std::vector<long long> frame_indices;
  /// Set when clamping at the clip's first frame produced repeated indices.
  bool duplicate_warning = false;

  long long last_frame() const { return frame_indices.front(); }
};

/// Frames to extract for one clip: the last frame e = floor(end_s * fps) and
/// nine more behind it, 1 frame apart for clips under 10 s and 5 frames apart
/// otherwise, clamped at floor(start_s * fps).
FrameSamplePlan plan_frames(const TemporalSpan& span, double fps);

/// Plans for every step of every video.
std::vector<FrameSamplePlan> plan_frames(const std::vector<VideoAnnotation>& videos,
                                         double fps);

/// {"fps": r, "plans": [{"video_id", "step_index", "frame_indices",
/// "duplicate_warning"}]} for an external frame extractor.
std::string format_frame_plans(const std::vector<FrameSamplePlan>& plans, double fps);

/// Id of the step-end facial image (the plan's first frame).
std::string step_end_image_id(const VideoAnnotation& video, int step_index,
                              double fps);

// ---------------------------------------------------------------------------
// Annotations

struct AnnotationSet {
  std::vector<VideoAnnotation> videos;
  /// Validation findings, prefixed with the video id. Not fatal by default.
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
};

struct ReadOptions {
  /// Throw ValidationError on the first invariant violation.
  bool strict = false;
};

AnnotationSet parse_annotations(std::string_view text, ReadOptions options = {});
AnnotationSet read_annotations(const std::filesystem::path& path,
                               ReadOptions options = {});
std::string format_annotations(const std::vector<VideoAnnotation>& videos);
void write_annotations(const std::filesystem::path& path,
                       const std::vector<VideoAnnotation>& videos);

// ---------------------------------------------------------------------------
// Questions, predictions, answer keys

struct QuestionSet {
  Task task = Task::kImageOrdering;
  std::vector<OrderingQuestion> questions;
};

QuestionSet parse_questions(std::string_view text);
QuestionSet read_questions(const std::filesystem::path& path);
std::string format_questions(const QuestionSet& set);
void write_questions(const std::filesystem::path& path, const QuestionSet& set);

/// Copy of `set` with every answer index removed.
QuestionSet strip_answers(const QuestionSet& set);

/// qid -> chosen candidate index in [0, 3].
using Predictions = std::map<std::string, int>;

/// Rejects duplicate qids and choices outside [0, 3].
Predictions parse_predictions(std::string_view text);
Predictions read_predictions(const std::filesystem::path& path);
std::string format_predictions(const Predictions& predictions);
void write_predictions(const std::filesystem::path& path,
                       const Predictions& predictions);

/// Answer key of a keyed question set. Throws if any answer is withheld.
Predictions answer_key(const QuestionSet& set);

/// Throws ValidationError naming the first prediction whose qid is not in
/// `set`.
void check_predictions_known(const Predictions& predictions,
                             const QuestionSet& set);

// ---------------------------------------------------------------------------
// Feature store

class FeatureStore {
 public:
  explicit FeatureStore(std::uint32_t dimension = 0);

  std::uint32_t dimension() const { return dimension_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(std::string_view id) const;

  /// Throws ValidationError if the vector length differs from dimension()
  /// or the id is empty or longer than 65535 bytes.
  void insert(std::string id, FeatureVector vector);

  /// Throws Error naming the id when absent.
  const FeatureVector& at(std::string_view id) const;
  const FeatureVector* find(std::string_view id) const;

  const std::map<std::string, FeatureVector, std::less<>>& entries() const {
    return entries_;
  }

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;

 private:
  std::uint32_t dimension_;
  std::map<std::string, FeatureVector, std::less<>> entries_;
};

FeatureStore parse_features(std::string_view bytes);
FeatureStore read_features(const std::filesystem::path& path);
std::string format_features(const FeatureStore& store);
void write_features(const std::filesystem::path& path, const FeatureStore& store);

// ---------------------------------------------------------------------------
// Localization predictions

struct Localization {
  TemporalSpan span;
  double score = 0.0;

  friend bool operator==(const Localization&, const Localization&) = default;
};

using Localizations = std::map<std::string, Localization>;

Localizations parse_localizations(std::string_view text);
std::string format_localizations(const Localizations& localizations);
void write_localizations(const std::filesystem::path& path,
                         const Localizations& localizations);

// ---------------------------------------------------------------------------
// Helpers

std::string read_file(const std::filesystem::path& path);
/// One JSON document; duplicate object keys and trailing bytes are
/// ParseErrors carrying the byte offset.
nlohmann::json parse_json_document(std::string_view text);
/// Writes via a temporary sibling and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ordervqa

#endif  // ORDERVQA_IO_HPP_
