// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace ordervqa {

bool TemporalSpan::valid() const {
  return std::isfinite(start_s) && std::isfinite(end_s) && start_s >= 0.0 &&
         end_s >= 0.0 && start_s < end_s;
}

TemporalSpan TemporalSpan::checked(double start_s, double end_s) {
  TemporalSpan span{start_s, end_s};
  if (!span.valid()) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "invalid temporal span (%g, %g)", start_s,
                  end_s);
    throw ValidationError(buf);
  }
  return span;
}

FacialAreaTable::FacialAreaTable(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  if (labels_.size() != static_cast<std::size_t>(kNumFacialAreas)) {
    throw ValidationError("facial area table needs exactly 24 labels, got " +
                          std::to_string(labels_.size()));
  }
  std::set<std::string> distinct(labels_.begin(), labels_.end());
  if (distinct.size() != labels_.size()) {
    throw ValidationError("facial area labels must be distinct");
  }
}

std::string FacialAreaTable::label(FacialArea area) const {
  if (!area.valid()) {
    throw ValidationError("facial area id out of range: " +
                          std::to_string(area.region_id));
  }
  if (labels_.empty()) return "area" + std::to_string(area.region_id);
  return labels_[static_cast<std::size_t>(area.region_id)];
}

const StepAnnotation* VideoAnnotation::step(int index) const {
  for (const auto& s : steps) {
    if (s.index == index) return &s;
  }
  return nullptr;
}

std::string Violation::to_string() const {
  std::string out = field;
  if (position > 0) out += " (step position " + std::to_string(position) + ")";
  out += ": " + message;
  return out;
}

std::vector<Violation> validate_annotation(const VideoAnnotation& a) {
  std::vector<Violation> out;
  if (a.video_id.empty()) out.push_back({"video_id", 0, "empty video id"});
  if (!std::isfinite(a.duration_s) || a.duration_s <= 0.0) {
    out.push_back({"duration_s", 0, "duration must be finite and positive"});
  }
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const auto& s = a.steps[i];
    const int pos = static_cast<int>(i) + 1;
    if (s.index != pos) {
      out.push_back({"index", pos,
                     "non-contiguous index at position " + std::to_string(pos) +
                         " (found " + std::to_string(s.index) + ")"});
    }
    if (s.caption.empty()) out.push_back({"caption", pos, "empty caption"});
    if (!std::isfinite(s.span.start_s) || !std::isfinite(s.span.end_s) ||
        s.span.start_s < 0.0 || s.span.end_s < 0.0) {
      out.push_back({"span", pos, "span ends must be finite and non-negative"});
    } else if (s.span.start_s >= s.span.end_s) {
      out.push_back({"span", pos, "start >= end"});
    } else if (std::isfinite(a.duration_s) && s.span.end_s > a.duration_s) {
      out.push_back({"span", pos, "span exceeds video duration"});
    }
    std::set<int> seen;
    for (const auto& area : s.areas) {
      if (!area.valid()) {
        out.push_back({"areas", pos,
                       "facial area id out of range: " +
                           std::to_string(area.region_id)});
      } else if (!seen.insert(area.region_id).second) {
        out.push_back({"areas", pos,
                       "duplicate facial area " + std::to_string(area.region_id)});
      }
    }
    if (i > 0 && s.span.start_s < a.steps[i - 1].span.start_s) {
      out.push_back({"span", pos, "start time decreases relative to previous step"});
    }
  }
  return out;
}

std::vector<Violation> annotation_warnings(const VideoAnnotation& a) {
  std::vector<Violation> out;
  for (std::size_t i = 1; i < a.steps.size(); ++i) {
    if (a.steps[i].span.start_s < a.steps[i - 1].span.end_s) {
      out.push_back({"span", static_cast<int>(i) + 1,
                     "overlaps previous step"});
    }
  }
  return out;
}

Permutation5::Permutation5() : order_{0, 1, 2, 3, 4} {}

Permutation5::Permutation5(std::array<int, 5> order) : order_(order) {
  if (!is_valid(order_)) {
    std::string text;
    for (int v : order_) text += std::to_string(v) + " ";
    throw ValidationError("not a permutation of 0..4: " + text);
  }
}

bool Permutation5::is_valid(std::span<const int> order) {
  if (order.size() != 5) return false;
  std::array<bool, 5> seen{};
  for (int v : order) {
    if (v < 0 || v > 4 || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

Permutation5 Permutation5::inverse() const {
  std::array<int, 5> inv{};
  for (int k = 0; k < 5; ++k) inv[static_cast<std::size_t>(order_[k])] = k;
  return Permutation5(inv);
}

Permutation5 Permutation5::reversed() const {
  std::array<int, 5> rev = order_;
  std::reverse(rev.begin(), rev.end());
  return Permutation5(rev);
}

std::string_view to_string(Task task) {
  return task == Task::kImageOrdering ? "image_ordering" : "step_ordering";
}

Task parse_task(std::string_view name) {
  if (name == "image_ordering") return Task::kImageOrdering;
  if (name == "step_ordering") return Task::kStepOrdering;
  throw ParseError("unknown task '" + std::string(name) +
                   "' (expected image_ordering or step_ordering)");
}

std::vector<Violation> validate_question(const OrderingQuestion& q) {
  std::vector<Violation> out;
  if (q.question_id.empty()) out.push_back({"qid", 0, "empty question id"});
  for (std::size_t i = 0; i < q.candidates.size(); ++i) {
    for (std::size_t j = i + 1; j < q.candidates.size(); ++j) {
      if (q.candidates[i] == q.candidates[j]) {
        out.push_back({"candidates", 0,
                       "candidates " + std::to_string(i) + " and " +
                           std::to_string(j) + " are identical"});
      }
    }
  }
  if (q.answer_index && (*q.answer_index < 0 || *q.answer_index > 3)) {
    out.push_back({"answer", 0, "answer index out of range [0,3]"});
  }
  for (const auto& item : q.items) {
    if (item.empty()) out.push_back({"items", 0, "empty item reference"});
  }
  if (!q.captions.empty() && q.captions.size() != 5) {
    out.push_back({"captions", 0, "expected 5 captions"});
  }
  return out;
}

FeatureVector::FeatureVector(std::vector<float> values)
    : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ValidationError("non-finite feature entry at " + std::to_string(i));
    }
  }
}

std::string image_id(std::string_view video_id, int step_index, long long frame) {
  return std::string(video_id) + "/" + std::to_string(step_index) + "/" +
         std::to_string(frame);
}

namespace {

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

}  // namespace

std::optional<ImageRef> parse_image_id(std::string_view id) {
  const auto last = id.rfind('/');
  if (last == std::string_view::npos || last == 0) return std::nullopt;
  const auto mid = id.rfind('/', last - 1);
  if (mid == std::string_view::npos || mid == 0) return std::nullopt;
  auto step = parse_number<int>(id.substr(mid + 1, last - mid - 1));
  auto frame = parse_number<long long>(id.substr(last + 1));
  if (!step || !frame || *step < 0 || *frame < 0) return std::nullopt;
  return ImageRef{std::string(id.substr(0, mid)), *step, *frame};
}

std::string segment_id(std::string_view video_id, int segment) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "@%05d", segment);
  return std::string(video_id) + buf;
}

}  // namespace ordervqa
