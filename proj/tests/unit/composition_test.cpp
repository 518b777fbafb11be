// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ordervqa/composition.hpp"
#include "ordervqa/oracle.hpp"
#include "ordervqa/synthetic.hpp"
#include "test_support.hpp"

namespace ordervqa {
namespace {

using testing::make_video;

TEST(Triplets, PartsTileTheVideo) {
  const auto v = make_video("v", 7);
  const auto images = step_end_images(v, 25.0);
  ASSERT_EQ(images.size(), 7u);
  for (int parts : {1, 3, 7}) {
    const auto t = build_triplets(v, parts, 11, 25.0);
    ASSERT_EQ(t.size(), static_cast<std::size_t>(parts));
    EXPECT_EQ(t.front().source, image_id("v", 0, 0));
    EXPECT_EQ(t.back().target, images.back());
    std::size_t covered = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      covered += t[i].captions.size();
      if (i > 0) EXPECT_EQ(t[i].source, t[i - 1].target);
    }
    EXPECT_EQ(covered, 7u);
  }
  // Seven parts means one caption each.
  const auto singles = build_triplets(v, 7, 0, 25.0);
  EXPECT_EQ(singles[3].captions, std::vector<std::string>{v.step(4)->caption});
  EXPECT_EQ(singles[3].text(), v.step(4)->caption);
  EXPECT_TRUE(build_triplets(v, 8, 0, 25.0).empty());
  // Zero parts means half the step count.
  EXPECT_EQ(build_triplets(v, 0, 0, 25.0).size(), 3u);
}

TEST(Triplets, SerializationRoundTrip) {
  auto t = build_triplets(make_video("v", 6), 3, 2, 25.0);
  EXPECT_EQ(parse_triplets(format_triplets(t)), t);
  EXPECT_THROW(parse_triplets(R"({"triplets":[{"video_id":"v"}]})"), ParseError);
  EXPECT_THROW(parse_triplets("[]"), ParseError);
}

// Places images 0..n-1 shuffled and returns the chronological recovery.
std::vector<int> oracle_sort(const VideoAnnotation& v, const std::vector<int>& steps,
                             const GreedySortOptions& opts = {},
                             std::vector<int>* ends = nullptr) {
  std::vector<std::string> images, captions;
  for (int s : steps) images.push_back(step_end_image_id(v, s, 25.0));
  auto sorted = steps;
  std::sort(sorted.begin(), sorted.end());
  for (int s : sorted) captions.push_back(v.step(s)->caption);
  const std::vector<VideoAnnotation> vs = {v};
  return greedy_sort(v.video_id, images, captions, PairwiseOracle(vs), CompositionOracle(vs),
                     opts, ends);
}

TEST(GreedySort, OraclesRecoverChronologicalOrder) {
  const auto v = make_video("v", 9);
  const std::vector<int> steps = {7, 2, 9, 4, 5};
  const auto order = oracle_sort(v, steps);
  std::vector<int> placed;
  for (int i : order) placed.push_back(steps[static_cast<std::size_t>(i)]);
  EXPECT_TRUE(std::is_sorted(placed.begin(), placed.end()));
  EXPECT_EQ(order, (std::vector<int>{1, 3, 4, 0, 2}));
}

TEST(GreedySort, SingleImageNeedsNoCaptions) {
  const std::string one[] = {"x"};
  EXPECT_EQ(greedy_sort("v", one, {}, ConstantPairwiseScorer(), ConstantCompositionScorer()),
            std::vector<int>{0});
}

TEST(GreedySort, ConstantScoresKeepPresentationOrderAndShortestRanges) {
  const std::vector<std::string> images = {"a", "b", "c", "d", "e"};
  const std::vector<std::string> captions = {"1", "2", "3", "4", "5", "6", "7"};
  std::vector<int> ends;
  const auto order = greedy_sort("v", images, captions, ConstantPairwiseScorer(0.5),
                                 ConstantCompositionScorer(0.0), {}, &ends);
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(ends, (std::vector<int>{1, 2, 3, 4}));
}

// Records every caption range the sort asks about.
class RecordingScorer : public CompositionScorer {
 public:
  mutable std::vector<std::vector<std::string>> ranges;
  double score(const std::string&, const std::string&, std::span<const std::string> captions,
               const std::string& candidate) const override {
    ranges.emplace_back(captions.begin(), captions.end());
    // Prefer long ranges so that later images are squeezed to the bound.
    return static_cast<double>(captions.size()) - 0.01 * static_cast<double>(candidate[0]);
  }
};

TEST(GreedySort, CaptionRangesAreConsecutiveAndLeaveRoomForTheRest) {
  const std::vector<std::string> images = {"a", "b", "c", "d"};
  const std::vector<std::string> captions = {"1", "2", "3", "4", "5", "6"};
  RecordingScorer rec;
  std::vector<int> ends;
  greedy_sort("v", images, captions, ConstantPairwiseScorer(), rec, {}, &ends);
  // Captions 2..6 (0-based 1..5) are shared by three images: the first
  // extension may run to index 3, leaving one caption each for the rest.
  EXPECT_EQ(ends, (std::vector<int>{3, 4, 5}));
  EXPECT_TRUE(std::is_sorted(ends.begin(), ends.end()));
  EXPECT_EQ(std::adjacent_find(ends.begin(), ends.end()), ends.end());
  for (const auto& r : rec.ranges) {
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_EQ(std::stoi(r[i]), std::stoi(r[i - 1]) + 1);
  }
  EXPECT_EQ(rec.ranges.front().front(), "2");
}

TEST(GreedySort, StartingFromTheFirstCaptionWidensTheFirstRange) {
  const std::vector<std::string> images = {"a", "b"};
  const std::vector<std::string> captions = {"1", "2"};
  RecordingScorer rec;
  std::vector<int> ends;
  greedy_sort("v", images, captions, ConstantPairwiseScorer(), rec,
              {.first_image_consumes_caption = false}, &ends);
  EXPECT_EQ(ends, std::vector<int>{1});
  EXPECT_EQ(rec.ranges.front(), std::vector<std::string>{"1"});
}

TEST(GreedySort, LiteralBoundFailsWhenCaptionsMatchImages) {
  const auto v = make_video("v", 9);
  const std::vector<int> steps = {3, 1, 5, 2, 4};
  EXPECT_NO_THROW(oracle_sort(v, steps));
  EXPECT_THROW(oracle_sort(v, steps, {.literal_bound = true}), ValidationError);
}

TEST(GreedySort, TooFewCaptionsRejected) {
  const std::vector<std::string> images = {"a", "b", "c"};
  const std::vector<std::string> captions = {"1", "2"};
  EXPECT_THROW(greedy_sort("v", images, captions, ConstantPairwiseScorer(),
                           ConstantCompositionScorer()),
               ValidationError);
}

OrderingQuestion edit_question() {
  OrderingQuestion q;
  q.candidates = {Permutation5({4, 3, 2, 1, 0}), Permutation5({1, 0, 2, 3, 4}),
                  Permutation5({0, 1, 2, 4, 3}), Permutation5({2, 0, 4, 1, 3})};
  return q;
}

TEST(EditDistanceSelection, NearestCandidateLowestIndexOnTies) {
  const auto q = edit_question();
  const Permutation5 predicted({0, 1, 2, 3, 4});
  EXPECT_EQ(levenshtein(predicted, q.candidates[1]), 2);
  EXPECT_EQ(levenshtein(predicted, q.candidates[2]), 2);
  EXPECT_EQ(select_answer_by_edit_distance(predicted, q), 1);
  EXPECT_EQ(select_answer_by_edit_distance(q.candidates[3], q), 3);
}

TEST(SelectAnswerGreedy, NeedsCaptions) {
  auto q = edit_question();
  q.question_id = "q";
  q.items = {"a", "b", "c", "d", "e"};
  EXPECT_THROW(select_answer_greedy(ConstantPairwiseScorer(), ConstantCompositionScorer(), q),
               ValidationError);
  q.captions = {"1", "2", "3", "4", "5"};
  // Constant scorers keep presentation order, nearest to candidate 1.
  EXPECT_EQ(select_answer_greedy(ConstantPairwiseScorer(), ConstantCompositionScorer(), q), 1);
}

struct Fixture {
  SyntheticWorld world;
  std::vector<CompositionTriplet> triplets;
  Vocabulary vocab;
};

Fixture fixture() {
  WorldConfig w;
  w.n_videos = 6;
  w.feature_dim = 8;
  w.segments_per_video = 16;
  w.segment_dim = 4;
  w.seed = 5;
  Fixture f{gen_world(w), {}, {}};
  std::vector<std::string> captions;
  for (const auto& v : f.world.videos) {
    for (const auto& s : v.steps) captions.push_back(s.caption);
    const auto t = build_triplets(v, 0, 1, w.fps);
    f.triplets.insert(f.triplets.end(), t.begin(), t.end());
  }
  f.vocab = Vocabulary::build(captions);
  return f;
}

CompositionConfig small_config() {
  CompositionConfig c;
  c.embed_dim = 6;
  c.text_hidden = 5;
  c.epochs = 3;
  c.batch_size = 4;
  c.learning_rate = 3e-3;
  c.seed = 2;
  return c;
}

std::vector<const CompositionTriplet*> distinct_target_batch(const Fixture& f, std::size_t n) {
  std::vector<const CompositionTriplet*> batch;
  for (std::size_t i = 0; i < n; ++i) batch.push_back(&f.triplets[i]);
  return batch;
}

TEST(CompositionModel, LossIsLogBatchSizeWhenSimilaritiesVanish) {
  const auto f = fixture();
  CompositionModel model(small_config(), &f.world.images, f.vocab);
  EXPECT_NEAR(model.scale(), 4.0, 1e-12);
  const auto batch = distinct_target_batch(f, 6);
  const double loss = model.batch_loss(batch).scalar();
  EXPECT_LE(std::abs(loss - std::log(6.0)), 2.0 * model.scale());
  auto log_scale = *model.parameters().find("log_scale");
  log_scale.mutable_value()(0, 0) = -60.0;
  EXPECT_NEAR(model.batch_loss(batch).scalar(), std::log(6.0), 1e-12);
}

TEST(CompositionModel, EmptyTextLeavesTheSourceRankedFirst) {
  const auto f = fixture();
  const CompositionModel model(small_config(), &f.world.images, f.vocab);
  const auto& v = f.world.videos[0];
  auto candidates = step_end_images(v, 25.0);
  const std::string source = candidates[2];
  const auto s = model.scores(v.video_id, source, {}, candidates);
  EXPECT_EQ(std::max_element(s.begin(), s.end()) - s.begin(), 2);
  EXPECT_NEAR(s[2], model.scale(), 1e-9);
  const std::string src[] = {source};
  EXPECT_EQ(model.compose(model.features(src), "").value(),
            model.project(model.features(src)).value());
}

TEST(CompositionModel, BatchLossGradientsMatchFiniteDifferences) {
  const auto f = fixture();
  CompositionModel model(small_config(), &f.world.images, f.vocab);
  Rng rng(3);
  for (auto v : model.parameters().vars()) {
    v.mutable_value() = testing::random_matrix(rng, v.rows(), v.cols(), 0.3);
  }
  const auto batch = distinct_target_batch(f, 3);
  const auto r = testing::check_gradients([&] { return model.batch_loss(batch); },
                                          model.parameters().vars(), 1e-5, 40);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_GT(r.max_abs_grad, 1e-3);
}

TEST(CompositionModel, TrainingLowersLossAndIsDeterministic) {
  const auto f = fixture();
  CompositionModel a(small_config(), &f.world.images, f.vocab);
  CompositionModel b(small_config(), &f.world.images, f.vocab);
  const auto log = train_composition(a, f.triplets);
  EXPECT_EQ(log, train_composition(b, f.triplets));
  ASSERT_EQ(log.size(), 3u);
  EXPECT_LT(log.back()["loss"].get<double>(), log.front()["loss"].get<double>());
}

TEST(CompositionModel, BatchOfOneRejected) {
  const auto f = fixture();
  auto cfg = small_config();
  cfg.batch_size = 1;
  CompositionModel model(cfg, &f.world.images, f.vocab);
  EXPECT_THROW(train_composition(model, f.triplets), ValidationError);
  cfg.init_scale = 0.0;
  EXPECT_THROW(CompositionModel(cfg, &f.world.images, f.vocab), ValidationError);
}

TEST(CompositionModel, CheckpointRoundTrip) {
  const auto f = fixture();
  CompositionModel model(small_config(), &f.world.images, f.vocab);
  const auto log = train_composition(model, f.triplets);
  const auto back = CompositionModel::from_checkpoint(
      parse_checkpoint(format_checkpoint(model.to_checkpoint(log))), &f.world.images);
  const auto& t = f.triplets[1];
  const auto candidates = step_end_images(f.world.videos[0], 25.0);
  const auto s0 = model.scores(t.video_id, t.source, t.captions, candidates);
  const auto s1 = back.scores(t.video_id, t.source, t.captions, candidates);
  for (std::size_t i = 0; i < s0.size(); ++i) EXPECT_NEAR(s0[i], s1[i], 1e-4);
  EXPECT_EQ(back.vocabulary().tokens(), f.vocab.tokens());
}

TEST(RankQueries, OracleRanksTargetFirst) {
  const auto v = make_video("v", 6);
  const std::vector<VideoAnnotation> vs = {v};
  std::vector<RetrievalQuery> queries;
  for (const auto& t : build_triplets(v, 3, 4, 25.0)) {
    queries.push_back({t, step_end_images(v, 25.0)});
  }
  const auto ranked = rank_queries(CompositionOracle(vs), {queries});
  ASSERT_EQ(ranked.size(), 1u);
  for (const auto& r : ranked[0]) EXPECT_EQ(r.ranked.front(), r.target);
  EXPECT_DOUBLE_EQ(recall_at_k_retrieval(ranked, 1), 1.0);
}

}  // namespace
}  // namespace ordervqa
