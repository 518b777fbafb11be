// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/oracle.hpp"

namespace ordervqa {

StepIndex::StepIndex(const std::vector<VideoAnnotation>& videos) {
  for (const auto& v : videos) {
    videos_.emplace(v.video_id, v);
    auto& captions = captions_[v.video_id];
    // First occurrence wins when a caption repeats.
    for (const auto& s : v.steps) captions.emplace(s.caption, s.index);
  }
}

const VideoAnnotation& StepIndex::video(const std::string& video_id) const {
  const auto it = videos_.find(video_id);
  if (it == videos_.end()) throw Error("oracle knows no video '" + video_id + "'");
  return it->second;
}

int StepIndex::step_of(const std::string& video_id, const std::string& item) const {
  const auto& v = video(video_id);
  if (const auto ref = parse_image_id(item); ref && ref->video_id == video_id) {
    if (ref->step_index == 0 || v.step(ref->step_index) != nullptr) return ref->step_index;
  }
  const auto& captions = captions_.find(video_id)->second;
  if (const auto it = captions.find(item); it != captions.end()) return it->second;
  throw Error("oracle cannot place item '" + item + "' in video '" + video_id + "'");
}

double PairwiseOracle::probability(const std::string& video_id, const std::string& a,
                                   const std::string& b) const {
  return index_.step_of(video_id, a) < index_.step_of(video_id, b) ? 1.0 : 0.0;
}

double CompositionOracle::score(const std::string& video_id, const std::string& source,
                                std::span<const std::string> captions,
                                const std::string& candidate) const {
  const int src = index_.step_of(video_id, source);
  const int cand = index_.step_of(video_id, candidate);
  if (captions.empty()) return cand == src ? 1.0 : 0.0;
  const int first = index_.step_of(video_id, captions.front());
  const int last = index_.step_of(video_id, captions.back());
  return cand == last && src < first ? 1.0 : 0.0;
}

Localization LocalizerOracle::localize(const VideoClip& clip, const std::string& caption) const {
  const int step = index_.step_of(clip.video_id, caption);
  return {index_.video(clip.video_id).step(step)->span, 1.0};
}

}  // namespace ordervqa
