// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by every ordervqa module. Values are plain data and
// are not mutated by the library once built, so they can be shared freely
// between threads.

#ifndef ORDERVQA_TYPES_HPP_
#define ORDERVQA_TYPES_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ordervqa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document. `offset` is the byte offset of the first
/// offending byte when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::optional<std::size_t> offset = {})
      : Error(what), offset_(offset) {}
  std::optional<std::size_t> offset() const { return offset_; }

 private:
  std::optional<std::size_t> offset_;
};

/// Input that parsed fine but breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or activation during training/inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kNumFacialAreas = 24;
inline constexpr int kItemsPerQuestion = 5;
inline constexpr int kCandidatesPerQuestion = 4;

struct TemporalSpan {
  double start_s = 0.0;
  double end_s = 0.0;

  /// True when both ends are finite, non-negative and start < end.
  bool valid() const;
  double center() const { return 0.5 * (start_s + end_s); }
  double width() const { return end_s - start_s; }

  /// Throws ValidationError unless valid().
  static TemporalSpan checked(double start_s, double end_s);

  friend bool operator==(const TemporalSpan&, const TemporalSpan&) = default;
};

/// Opaque face-region id in [0, 24). Names come from an optional label table.
struct FacialArea {
  int region_id = 0;

  bool valid() const { return region_id >= 0 && region_id < kNumFacialAreas; }
  friend auto operator<=>(const FacialArea&, const FacialArea&) = default;
};

/// Optional user-supplied names for the 24 region ids.
class FacialAreaTable {
 public:
  FacialAreaTable() = default;
  explicit FacialAreaTable(std::vector<std::string> labels);

  /// The configured label, or "area<id>" when no table was supplied.
  std::string label(FacialArea area) const;

 private:
  std::vector<std::string> labels_;
};

struct StepAnnotation {
  int index = 0;  // 1-based
  std::string caption;
  TemporalSpan span;
  std::vector<FacialArea> areas;

  friend bool operator==(const StepAnnotation&, const StepAnnotation&) = default;
};

struct VideoAnnotation {
  std::string video_id;
  double duration_s = 0.0;
  std::vector<StepAnnotation> steps;

  /// Step with 1-based `index`, or nullptr.
  const StepAnnotation* step(int index) const;

  friend bool operator==(const VideoAnnotation&, const VideoAnnotation&) = default;
};

struct Violation {
  std::string field;
  int position = 0;  // 1-based step position, 0 for video-level fields
  std::string message;

  std::string to_string() const;
};

/// Every broken invariant of `a`; empty iff the annotation is well formed.
std::vector<Violation> validate_annotation(const VideoAnnotation& a);

/// Soft issues that are legal but worth reporting (overlapping step spans).
std::vector<Violation> annotation_warnings(const VideoAnnotation& a);

/// A reordering of five presented items. order()[k] is the presentation
/// index of the item claimed to come k-th in time.
class Permutation5 {
 public:
  /// Identity.
  Permutation5();
  /// Throws ValidationError unless `order` holds 0..4 exactly once each.
  explicit Permutation5(std::array<int, 5> order);

  static bool is_valid(std::span<const int> order);

  const std::array<int, 5>& order() const { return order_; }
  int operator[](std::size_t k) const { return order_[k]; }
  Permutation5 inverse() const;
  Permutation5 reversed() const;

  friend auto operator<=>(const Permutation5&, const Permutation5&) = default;

 private:
  std::array<int, 5> order_;
};

enum class Task { kImageOrdering, kStepOrdering };

std::string_view to_string(Task task);
/// Throws ParseError on unknown names.
Task parse_task(std::string_view name);

struct OrderingQuestion {
  std::string question_id;
  Task task = Task::kImageOrdering;
  std::string video_id;
  /// Image ids (image ordering) or captions (step ordering), presentation order.
  std::array<std::string, 5> items;
  std::array<Permutation5, 4> candidates;
  std::optional<int> answer_index;
  /// Image ordering only: captions of the five pictured steps, in
  /// chronological order. Empty when the question ships without them.
  std::vector<std::string> captions;

  friend bool operator==(const OrderingQuestion&, const OrderingQuestion&) = default;
};

/// Structural checks on a question: distinct candidates, answer in range.
std::vector<Violation> validate_question(const OrderingQuestion& q);

/// Fixed-length feature vector; entries must be finite.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<float> values);

  std::size_t size() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<float> values_;
};

/// Image items are named "<video_id>/<step>/<frame>"; step 0 frame 0 is the
/// face before any makeup is applied.
std::string image_id(std::string_view video_id, int step_index, long long frame);

struct ImageRef {
  std::string video_id;
  int step_index = 0;
  long long frame = 0;
};

/// Inverse of image_id(); nullopt if `id` does not follow the scheme.
std::optional<ImageRef> parse_image_id(std::string_view id);

/// Video segment features are stored as "<video_id>@<segment>".
std::string segment_id(std::string_view video_id, int segment);

}  // namespace ordervqa

#endif  // ORDERVQA_TYPES_HPP_
