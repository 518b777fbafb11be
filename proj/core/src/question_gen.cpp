// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/question_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ordervqa/random.hpp"

namespace ordervqa {

namespace {

std::array<int, 5> random_order(Rng& rng) {
  std::array<int, 5> order{0, 1, 2, 3, 4};
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

bool distinct_captions(const VideoAnnotation& video, const std::vector<int>& steps) {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (std::size_t j = i + 1; j < steps.size(); ++j) {
      if (video.steps[static_cast<std::size_t>(steps[i])].caption ==
          video.steps[static_cast<std::size_t>(steps[j])].caption) {
        return false;
      }
    }
  }
  return true;
}

/// Step positions (0-based, ascending) of five distinct steps.
std::vector<int> pick_steps(const VideoAnnotation& video, Rng& rng, bool need_distinct) {
  std::vector<int> all(video.steps.size());
  std::iota(all.begin(), all.end(), 0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<int> chosen(all.begin(), all.begin() + kItemsPerQuestion);
    std::sort(chosen.begin(), chosen.end());
    if (!need_distinct || distinct_captions(video, chosen)) return chosen;
  }
  return {};
}

bool usable(const VideoAnnotation& video, const QuestionGenOptions& options,
            Task task) {
  if (static_cast<int>(video.steps.size()) < kMinStepsPerQuestionVideo) return false;
  if (options.excluded_video_ids.contains(video.video_id)) return false;
  if (!validate_annotation(video).empty()) return false;
  if (task == Task::kStepOrdering) {
    std::set<std::string> captions;
    for (const auto& s : video.steps) captions.insert(s.caption);
    if (captions.size() < static_cast<std::size_t>(kItemsPerQuestion)) return false;
  }
  return true;
}

OrderingQuestion make_question(const VideoAnnotation& video, Task task,
                               const QuestionGenOptions& options, Rng& rng) {
  const auto steps = pick_steps(video, rng, task == Task::kStepOrdering);
  if (steps.empty()) throw ValidationError("no distinct step captions in " + video.video_id);

  // presentation[p] = chronological rank of the item shown at position p.
  const auto presentation = random_order(rng);
  OrderingQuestion q;
  q.task = task;
  q.video_id = video.video_id;
  for (int p = 0; p < kItemsPerQuestion; ++p) {
    const auto& step = video.steps[static_cast<std::size_t>(steps[static_cast<std::size_t>(presentation[p])])];
    q.items[static_cast<std::size_t>(p)] =
        task == Task::kImageOrdering ? step_end_image_id(video, step.index, options.fps)
                                     : step.caption;
  }
  if (task == Task::kImageOrdering && options.include_captions) {
    for (int s : steps) q.captions.push_back(video.steps[static_cast<std::size_t>(s)].caption);
  }

  const Permutation5 positive = Permutation5(presentation).inverse();
  std::vector<Permutation5> candidates{positive};
  while (candidates.size() < static_cast<std::size_t>(kCandidatesPerQuestion)) {
    Permutation5 negative(random_order(rng));
    if (std::find(candidates.begin(), candidates.end(), negative) == candidates.end()) {
      candidates.push_back(negative);
    }
  }
  std::array<int, 4> slots{0, 1, 2, 3};
  std::shuffle(slots.begin(), slots.end(), rng);
  for (int c = 0; c < kCandidatesPerQuestion; ++c) {
    q.candidates[static_cast<std::size_t>(slots[static_cast<std::size_t>(c)])] =
        candidates[static_cast<std::size_t>(c)];
  }
  q.answer_index = slots[0];
  return q;
}

QuestionSet generate(const std::vector<VideoAnnotation>& videos,
                     const QuestionGenOptions& options, Task task) {
  if (options.n_questions < 0) throw ValidationError("n_questions must be non-negative");
  std::vector<const VideoAnnotation*> eligible;
  for (const auto& v : videos) {
    if (usable(v, options, task)) eligible.push_back(&v);
  }
  if (eligible.empty()) {
    throw ValidationError(std::string("no video qualifies for ") +
                          std::string(to_string(task)) +
                          " questions (need >= 5 steps, not excluded)");
  }
  const int n_videos = static_cast<int>(eligible.size());
  const int cap = options.per_video_cap > 0
                      ? options.per_video_cap
                      : (options.n_questions + n_videos - 1) / n_videos;
  if (static_cast<long long>(cap) * n_videos < options.n_questions) {
    throw ValidationError("cannot draw " + std::to_string(options.n_questions) +
                          " questions from " + std::to_string(n_videos) +
                          " videos with per-video cap " + std::to_string(cap));
  }

  // Spread questions round-robin over a seeded video order.
  Rng master(derive_seed(options.seed, std::string("order/") + std::string(to_string(task))));
  std::vector<int> order(static_cast<std::size_t>(n_videos));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), master);
  std::vector<int> counts(static_cast<std::size_t>(n_videos), 0);
  for (int q = 0; q < options.n_questions; ++q) {
    counts[static_cast<std::size_t>(order[static_cast<std::size_t>(q % n_videos)])]++;
  }

  QuestionSet set;
  set.task = task;
  const char* prefix = task == Task::kImageOrdering ? "io" : "so";
  int serial = 0;
  for (int slot = 0; slot < n_videos; ++slot) {
    const int vi = order[static_cast<std::size_t>(slot)];
    const auto& video = *eligible[static_cast<std::size_t>(vi)];
    Rng rng(derive_seed(options.seed, std::string(to_string(task)) + "/" + video.video_id));
    for (int k = 0; k < counts[static_cast<std::size_t>(vi)]; ++k) {
      auto q = make_question(video, task, options, rng);
      char qid[32];
      std::snprintf(qid, sizeof(qid), "%s%06d", prefix, serial++);
      q.question_id = qid;
      set.questions.push_back(std::move(q));
    }
  }
  return set;
}

}  // namespace

QuestionSet gen_image_ordering(const std::vector<VideoAnnotation>& videos,
                               const QuestionGenOptions& options) {
  return generate(videos, options, Task::kImageOrdering);
}

QuestionSet gen_step_ordering(const std::vector<VideoAnnotation>& videos,
                              const QuestionGenOptions& options) {
  return generate(videos, options, Task::kStepOrdering);
}

std::array<int, 5> item_steps(const OrderingQuestion& q, const VideoAnnotation& video) {
  std::array<int, 5> steps{};
  for (std::size_t p = 0; p < 5; ++p) {
    int found = -1;
    if (q.task == Task::kImageOrdering) {
      if (auto ref = parse_image_id(q.items[p]); ref && ref->video_id == video.video_id) {
        found = ref->step_index;
      }
    } else {
      for (const auto& s : video.steps) {
        if (s.caption == q.items[p]) {
          found = s.index;
          break;
        }
      }
    }
    if (found < 0) {
      throw ValidationError("question " + q.question_id + ": item '" + q.items[p] +
                            "' not found in video " + video.video_id);
    }
    steps[p] = found;
  }
  return steps;
}

std::optional<int> chronological_candidate(const OrderingQuestion& q,
                                           const VideoAnnotation& video) {
  const auto steps = item_steps(q, video);
  std::optional<int> match;
  for (int c = 0; c < kCandidatesPerQuestion; ++c) {
    const auto& order = q.candidates[static_cast<std::size_t>(c)].order();
    bool increasing = true;
    for (std::size_t k = 1; k < 5; ++k) {
      if (steps[static_cast<std::size_t>(order[k - 1])] >=
          steps[static_cast<std::size_t>(order[k])]) {
        increasing = false;
      }
    }
    if (increasing) {
      if (match) return std::nullopt;
      match = c;
    }
  }
  return match;
}

int smallest_step_gap(const OrderingQuestion& q, const VideoAnnotation& video) {
  auto steps = item_steps(q, video);
  std::sort(steps.begin(), steps.end());
  int best = steps[1] - steps[0];
  for (std::size_t i = 2; i < steps.size(); ++i) best = std::min(best, steps[i] - steps[i - 1]);
  return best;
}

}  // namespace ordervqa
