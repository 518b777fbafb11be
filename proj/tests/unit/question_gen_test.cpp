// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>
#include <set>

#include "ordervqa/io.hpp"
#include "ordervqa/question_gen.hpp"
#include "test_support.hpp"

namespace ordervqa {
namespace {

using testing::make_video;

std::vector<VideoAnnotation> corpus() {
  std::vector<VideoAnnotation> out;
  for (int i = 0; i < 12; ++i) out.push_back(make_video("v" + std::to_string(i), 4 + i % 9));
  return out;
}

// Step index behind an item, found by scanning the annotation directly.
int step_of_item(const VideoAnnotation& v, Task task, const std::string& item) {
  for (const auto& s : v.steps) {
    if (task == Task::kStepOrdering ? s.caption == item
                                    : item == step_end_image_id(v, s.index, 25.0)) {
      return s.index;
    }
  }
  return -1;
}

bool sorts_items(const OrderingQuestion& q, const VideoAnnotation& v, const Permutation5& c) {
  int prev = -1;
  for (int k = 0; k < 5; ++k) {
    const int s = step_of_item(v, q.task, q.items[static_cast<std::size_t>(c[k])]);
    if (s <= prev) return false;
    prev = s;
  }
  return true;
}

class GeneratedQuestions : public ::testing::TestWithParam<Task> {};

TEST_P(GeneratedQuestions, ExactlyOneCandidateIsChronologicalAndItIsTheAnswer) {
  const auto videos = corpus();
  std::map<std::string, const VideoAnnotation*> by_id;
  for (const auto& v : videos) by_id[v.video_id] = &v;
  QuestionGenOptions opts;
  opts.n_questions = 200;
  opts.seed = 7;
  const auto set = GetParam() == Task::kImageOrdering ? gen_image_ordering(videos, opts)
                                                      : gen_step_ordering(videos, opts);
  ASSERT_EQ(set.questions.size(), 200u);
  std::set<std::string> qids;
  for (const auto& q : set.questions) {
    EXPECT_TRUE(qids.insert(q.question_id).second);
    EXPECT_TRUE(validate_question(q).empty());
    const auto& v = *by_id.at(q.video_id);
    EXPECT_GE(v.steps.size(), 5u);
    int chronological = 0;
    for (int c = 0; c < 4; ++c) {
      if (sorts_items(q, v, q.candidates[static_cast<std::size_t>(c)])) {
        ++chronological;
        EXPECT_EQ(q.answer_index, c);
      }
    }
    EXPECT_EQ(chronological, 1);
    EXPECT_EQ(chronological_candidate(q, v), q.answer_index);
    std::set<std::string> items(q.items.begin(), q.items.end());
    EXPECT_EQ(items.size(), 5u);
  }
}

TEST_P(GeneratedQuestions, DeterministicUnderSeed) {
  const auto videos = corpus();
  QuestionGenOptions opts;
  opts.n_questions = 50;
  opts.seed = 3;
  auto gen = [&] {
    return format_questions(GetParam() == Task::kImageOrdering ? gen_image_ordering(videos, opts)
                                                               : gen_step_ordering(videos, opts));
  };
  const auto first = gen();
  EXPECT_EQ(first, gen());
  opts.seed = 4;
  EXPECT_NE(first, gen());
}

INSTANTIATE_TEST_SUITE_P(BothTasks, GeneratedQuestions,
                         ::testing::Values(Task::kImageOrdering, Task::kStepOrdering),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(QuestionGen, FourStepVideoIsSkipped) {
  const std::vector<VideoAnnotation> only_short = {make_video("s", 4)};
  EXPECT_THROW(gen_image_ordering(only_short, {.n_questions = 1}), ValidationError);
  const std::vector<VideoAnnotation> mixed = {make_video("s", 4), make_video("l", 5)};
  for (const auto& q : gen_step_ordering(mixed, {.n_questions = 10}).questions) {
    EXPECT_EQ(q.video_id, "l");
  }
}

TEST(QuestionGen, ExcludedVideosNeverSampled) {
  QuestionGenOptions opts;
  opts.n_questions = 100;
  opts.excluded_video_ids = {"v4", "v5", "v6"};
  for (const auto& q : gen_step_ordering(corpus(), opts).questions) {
    EXPECT_FALSE(opts.excluded_video_ids.contains(q.video_id));
  }
}

TEST(QuestionGen, PerVideoCapDefaultsToEvenSpread) {
  QuestionGenOptions opts;
  opts.n_questions = 25;
  std::map<std::string, int> per_video;
  for (const auto& q : gen_image_ordering(corpus(), opts).questions) ++per_video[q.video_id];
  // Ten eligible videos (two have four steps): ceil(25 / 10) = 3.
  for (const auto& [id, n] : per_video) EXPECT_LE(n, 3) << id;
  opts.per_video_cap = 2;
  EXPECT_THROW(gen_image_ordering(corpus(), opts), ValidationError);
}

TEST(QuestionGen, ImageQuestionsCarryChronologicalCaptions) {
  const auto videos = corpus();
  const auto set = gen_image_ordering(videos, {.n_questions = 20, .seed = 1});
  for (const auto& q : set.questions) {
    ASSERT_EQ(q.captions.size(), 5u);
    const auto& v = *std::find_if(videos.begin(), videos.end(),
                                  [&](const auto& x) { return x.video_id == q.video_id; });
    const auto& c = q.candidates[static_cast<std::size_t>(*q.answer_index)];
    for (int k = 0; k < 5; ++k) {
      const int s = step_of_item(v, q.task, q.items[static_cast<std::size_t>(c[k])]);
      EXPECT_EQ(q.captions[static_cast<std::size_t>(k)], v.step(s)->caption);
    }
  }
  QuestionGenOptions bare{.n_questions = 5};
  bare.include_captions = false;
  EXPECT_TRUE(gen_image_ordering(videos, bare).questions[0].captions.empty());
}

TEST(QuestionGen, StepOrderingNeedsDistinctCaptions) {
  auto v = make_video("dup", 6);
  for (auto& s : v.steps) s.caption = "same";
  EXPECT_THROW(gen_step_ordering({v}, {.n_questions = 1}), ValidationError);
  EXPECT_NO_THROW(gen_image_ordering({v}, {.n_questions = 1}));
}

TEST(QuestionGen, StrippedSetIsAValidTestFile) {
  const auto set = gen_step_ordering(corpus(), {.n_questions = 30, .seed = 2});
  const auto stripped = parse_questions(format_questions(strip_answers(set)));
  ASSERT_EQ(stripped.questions.size(), 30u);
  for (const auto& q : stripped.questions) EXPECT_FALSE(q.answer_index.has_value());
  EXPECT_EQ(answer_key(set).size(), 30u);
}

TEST(SmallestStepGap, MinOverChronologicalNeighbours) {
  const auto v = make_video("g", 12);
  OrderingQuestion q;
  q.task = Task::kStepOrdering;
  q.video_id = "g";
  q.items = {v.step(9)->caption, v.step(1)->caption, v.step(4)->caption, v.step(12)->caption,
             v.step(6)->caption};
  EXPECT_EQ(smallest_step_gap(q, v), 2);
  EXPECT_EQ(item_steps(q, v), (std::array<int, 5>{9, 1, 4, 12, 6}));
  q.items[0] = "not a caption";
  EXPECT_THROW(item_steps(q, v), ValidationError);
}

}  // namespace
}  // namespace ordervqa
