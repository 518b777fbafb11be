// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <filesystem>

#include "ordervqa/io.hpp"
#include "ordervqa/question_gen.hpp"
#include "test_support.hpp"

namespace ordervqa {
namespace {

using testing::make_video;

std::vector<long long> frames(const FrameSamplePlan& p) { return p.frame_indices; }

TEST(PlanFrames, LongClipStepsBackFiveFrames) {
  const auto p = plan_frames({0.0, 30.0}, 10.0);
  EXPECT_EQ(frames(p), (std::vector<long long>{300, 295, 290, 285, 280, 275, 270, 265, 260, 255}));
  EXPECT_FALSE(p.duplicate_warning);
}

TEST(PlanFrames, ShortClipStepsBackOneFrame) {
  const auto p = plan_frames({0.0, 3.0}, 10.0);
  EXPECT_EQ(frames(p), (std::vector<long long>{30, 29, 28, 27, 26, 25, 24, 23, 22, 21}));
}

TEST(PlanFrames, ClampsAtClipStartAndFlagsDuplicates) {
  const auto p = plan_frames({0.0, 0.5}, 2.0);
  EXPECT_EQ(frames(p), (std::vector<long long>{1, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_TRUE(p.duplicate_warning);
}

TEST(PlanFrames, TenSecondsExactlyUsesTheLongBranch) {
  const auto p = plan_frames({5.0, 15.0}, 1.0);
  EXPECT_EQ(p.frame_indices[1], 10);
  // A clip just under ten seconds uses consecutive frames.
  EXPECT_EQ(plan_frames({5.0, 14.99}, 1.0).frame_indices[1], 13);
}

TEST(PlanFrames, ClampUsesTheClipsFirstFrame) {
  // Clip (20, 21) at 10 fps covers frames 200..210.
  const auto p = plan_frames({20.0, 21.0}, 10.0);
  EXPECT_EQ(p.frame_indices.back(), 201);
  const auto q = plan_frames({20.0, 20.5}, 10.0);
  EXPECT_EQ(q.frame_indices.front(), 205);
  EXPECT_EQ(q.frame_indices.back(), 200);
  EXPECT_TRUE(q.duplicate_warning);
}

TEST(PlanFrames, RejectsBadInput) {
  EXPECT_THROW(plan_frames({0.0, 1.0}, 0.0), ValidationError);
  EXPECT_THROW(plan_frames({2.0, 1.0}, 25.0), ValidationError);
}

TEST(PlanFrames, FormatsEveryStep) {
  const auto plans = plan_frames(std::vector{make_video("a", 2)}, 25.0);
  ASSERT_EQ(plans.size(), 2u);
  const auto doc = parse_json_document(format_frame_plans(plans, 25.0));
  EXPECT_EQ(doc["plans"][1]["video_id"], "a");
  EXPECT_EQ(doc["plans"][1]["step_index"], 2);
  EXPECT_EQ(doc["plans"][1]["frame_indices"][0], 1000);
}

TEST(Annotations, MinimalFileParses) {
  const auto set = parse_annotations(
      R"({"videos":[{"video_id":"v","duration_s":10,"steps":[
           {"index":1,"caption":"c","start_s":0,"end_s":5,"areas":[2]}]}]})");
  ASSERT_EQ(set.videos.size(), 1u);
  EXPECT_EQ(set.videos[0].steps[0].areas, (std::vector<FacialArea>{FacialArea{2}}));
  EXPECT_TRUE(set.violations.empty());
}

TEST(Annotations, MissingEndNamesTheField) {
  try {
    parse_annotations(R"({"videos":[{"video_id":"v","duration_s":10,"steps":[
                         {"index":1,"caption":"c","start_s":0,"areas":[]}]}]})");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("end_s"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("steps[0]"), std::string::npos) << e.what();
  }
}

TEST(Annotations, RoundTrip) {
  std::vector<VideoAnnotation> videos = {make_video("a", 3), make_video("b", 6, 7.25)};
  videos[1].steps[2].areas = {FacialArea{0}, FacialArea{23}};
  const auto set = parse_annotations(format_annotations(videos));
  EXPECT_EQ(set.videos, videos);
}

TEST(Annotations, ViolationsCollectedUnlessStrict) {
  auto v = make_video("a", 2);
  v.steps[1].index = 5;
  const auto text = format_annotations({v});
  EXPECT_EQ(parse_annotations(text).violations.size(), 1u);
  EXPECT_THROW(parse_annotations(text, {.strict = true}), ValidationError);
}

TEST(Annotations, DuplicateVideoIdRejected) {
  EXPECT_THROW(parse_annotations(format_annotations({make_video("a", 1), make_video("a", 1)})),
               ParseError);
}

TEST(Json, TrailingGarbageReportsOffset) {
  const std::string text = R"({"videos":[]} x)";
  try {
    parse_annotations(text);
    FAIL();
  } catch (const ParseError& e) {
    ASSERT_TRUE(e.offset().has_value());
    EXPECT_EQ(*e.offset(), text.find('x'));
  }
}

TEST(Json, DuplicateKeysRejected) {
  EXPECT_THROW(parse_predictions(R"({"q1":1,"q1":2})"), ParseError);
}

OrderingQuestion sample_question() {
  OrderingQuestion q;
  q.question_id = "q1";
  q.task = Task::kStepOrdering;
  q.video_id = "v";
  q.items = {"a", "b", "c", "d", "e"};
  q.candidates = {Permutation5({0, 1, 2, 3, 4}), Permutation5({1, 0, 2, 3, 4}),
                  Permutation5({4, 3, 2, 1, 0}), Permutation5({2, 0, 4, 1, 3})};
  q.answer_index = 2;
  return q;
}

TEST(Questions, RoundTripWithAndWithoutAnswers) {
  QuestionSet set{Task::kStepOrdering, {sample_question()}};
  set.questions[0].captions = {"1", "2", "3", "4", "5"};
  EXPECT_EQ(parse_questions(format_questions(set)).questions, set.questions);
  const auto stripped = strip_answers(set);
  EXPECT_FALSE(stripped.questions[0].answer_index.has_value());
  const auto reread = parse_questions(format_questions(stripped));
  EXPECT_FALSE(reread.questions[0].answer_index.has_value());
  EXPECT_THROW(answer_key(stripped), ValidationError);
}

TEST(Questions, DuplicateIdsRejected) {
  QuestionSet set{Task::kStepOrdering, {sample_question(), sample_question()}};
  EXPECT_THROW(parse_questions(format_questions(set)), ParseError);
}

TEST(Questions, BadCandidateRejected) {
  auto text = format_questions({Task::kStepOrdering, {sample_question()}});
  const auto at = text.find("4,\n");
  ASSERT_NE(at, std::string::npos);
  text[at] = '7';
  EXPECT_THROW(parse_questions(text), ParseError);
}

TEST(Predictions, AcceptedAndRangeChecked) {
  const auto p = parse_predictions(R"({"q1":2})");
  EXPECT_EQ(p.at("q1"), 2);
  EXPECT_THROW(parse_predictions(R"({"q1":5})"), ValidationError);
  EXPECT_THROW(parse_predictions(R"({"q1":"2"})"), ParseError);
  EXPECT_EQ(parse_predictions(format_predictions(p)), p);
}

TEST(Predictions, UnknownQuestionRejected) {
  QuestionSet set{Task::kStepOrdering, {sample_question()}};
  EXPECT_NO_THROW(check_predictions_known({{"q1", 0}}, set));
  EXPECT_THROW(check_predictions_known({{"q9", 0}}, set), ValidationError);
}

TEST(Features, RoundTripIsBitExact) {
  FeatureStore store(3);
  store.insert("a", FeatureVector({1.0f, -0.0f, 3.4028235e38f}));
  store.insert("b", FeatureVector({1e-45f, 0.1f, -2.5f}));
  const auto back = parse_features(format_features(store));
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [id, vec] : store.entries()) {
    const auto got = back.at(id).values();
    for (std::size_t i = 0; i < vec.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(got[i]), std::bit_cast<std::uint32_t>(vec[i]));
    }
  }
}

// Byte layout written out by hand: magic, dim, count, then per record the
// id length, id bytes and little-endian floats.
TEST(Features, MatchesHandEncodedBytes) {
  FeatureStore store(1);
  store.insert("ab", FeatureVector({1.0f}));
  const std::string expected("OVQF\x01\x00\x00\x00\x01\x00\x00\x00\x02\x00"
                             "ab\x00\x00\x80\x3f",
                             20);
  EXPECT_EQ(format_features(store), expected);
}

TEST(Features, ErrorsCarryOffsets) {
  FeatureStore store(2);
  store.insert("x", FeatureVector({1.0f, 2.0f}));
  const auto bytes = format_features(store);
  try {
    parse_features(bytes + "z");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset().value_or(0), bytes.size());
  }
  EXPECT_THROW(parse_features(bytes.substr(0, bytes.size() - 1)), ParseError);
  EXPECT_THROW(parse_features("OVQX" + bytes.substr(4)), ParseError);
  EXPECT_THROW(store.insert("y", FeatureVector({1.0f})), ValidationError);
}

TEST(Localizations, RoundTrip) {
  Localizations l{{"q/0", {{1.5, 4.0}, 0.75}}, {"q/1", {{0.0, 2.0}, 0.5}}};
  EXPECT_EQ(parse_localizations(format_localizations(l)), l);
}

TEST(Files, WriteThenReadThroughDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "ordervqa_io_test";
  std::filesystem::remove_all(dir);
  const std::vector<VideoAnnotation> videos = {make_video("a", 5)};
  write_annotations(dir / "nested" / "a.json", videos);
  EXPECT_EQ(read_annotations(dir / "nested" / "a.json").videos, videos);
  EXPECT_THROW(read_annotations(dir / "missing.json"), Error);
  std::filesystem::remove_all(dir);
}

TEST(StepEndImage, UsesThePlansLastFrame) {
  const auto v = make_video("v", 3);
  EXPECT_EQ(step_end_image_id(v, 2, 25.0), image_id("v", 2, 1000));
  EXPECT_THROW(step_end_image_id(v, 4, 25.0), ValidationError);
}

}  // namespace
}  // namespace ordervqa
