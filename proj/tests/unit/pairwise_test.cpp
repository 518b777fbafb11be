// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "ordervqa/metrics.hpp"
#include "ordervqa/oracle.hpp"
#include "ordervqa/pairwise.hpp"
#include "ordervqa/synthetic.hpp"
#include "test_support.hpp"

namespace ordervqa {
namespace {

using testing::make_video;
using Grid = std::array<std::array<double, 5>, 5>;

// p[i][j] = value for i earlier than j in the presented order 0..4.
Grid grid_from(double earlier, double later) {
  Grid p{};
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      if (i != j) p[i][j] = i < j ? earlier : later;
    }
  }
  return p;
}

TEST(CandidateScore, CountsTheTenImpliedPairs) {
  const Grid p = grid_from(1.0, 0.0);
  EXPECT_DOUBLE_EQ(candidate_score(p, Permutation5({0, 1, 2, 3, 4})), 1.0);
  EXPECT_DOUBLE_EQ(candidate_score(p, Permutation5({4, 3, 2, 1, 0})), 0.0);
  // One adjacent swap flips exactly one of the ten pairs.
  EXPECT_DOUBLE_EQ(candidate_score(p, Permutation5({1, 0, 2, 3, 4})), 0.9);
  // {2,0,4,1,3} has inversions (2,0) (2,1) (4,1) (4,3): 6 of 10 pairs agree.
  EXPECT_DOUBLE_EQ(candidate_score(p, Permutation5({2, 0, 4, 1, 3})), 0.6);
}

TEST(CandidateScore, PermutationAndReverseSumToOneForComplementaryScorers) {
  Rng rng(1);
  Grid p{};
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      p[i][j] = uniform_real(rng, 0.0, 1.0);
      p[j][i] = 1.0 - p[i][j];
    }
  }
  const Permutation5 perm({3, 0, 4, 2, 1});
  EXPECT_NEAR(candidate_score(p, perm) + candidate_score(p, perm.reversed()), 1.0, 1e-15);
}

TEST(ArgmaxLowest, TiesGoToTheFirstCandidate) {
  const double s[] = {0.2, 0.7, 0.7, 0.1};
  EXPECT_EQ(argmax_lowest(s), 1);
  const double flat[] = {0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(argmax_lowest(flat), 0);
}

TEST(SelectAnswerPairwise, ConstantScorerPicksCandidateZero) {
  OrderingQuestion q;
  q.video_id = "v";
  q.items = {"a", "b", "c", "d", "e"};
  q.candidates = {Permutation5({4, 3, 2, 1, 0}), Permutation5({0, 1, 2, 3, 4}),
                  Permutation5({1, 0, 2, 3, 4}), Permutation5({2, 0, 4, 1, 3})};
  EXPECT_EQ(select_answer_pairwise(ConstantPairwiseScorer(0.5), q), 0);
}

TEST(SelectAnswerPairwise, OracleFindsTheChronologicalCandidate) {
  const auto v = make_video("v", 6);
  OrderingQuestion q;
  q.task = Task::kStepOrdering;
  q.video_id = "v";
  q.items = {v.step(5)->caption, v.step(2)->caption, v.step(6)->caption, v.step(1)->caption,
             v.step(3)->caption};
  q.candidates = {Permutation5({0, 1, 2, 3, 4}), Permutation5({3, 1, 4, 0, 2}),
                  Permutation5({3, 4, 1, 0, 2}), Permutation5({2, 0, 4, 1, 3})};
  EXPECT_EQ(select_answer_pairwise(PairwiseOracle({v}), q), 1);
}

TEST(PairDataset, BalancedAndCoversEveryPairTwice) {
  const std::vector<VideoAnnotation> videos = {make_video("a", 5), make_video("b", 1),
                                               make_video("c", 3)};
  const auto data = build_pair_dataset(videos, {.kind = ItemKind::kCaption, .seed = 3});
  // C(5,2) + C(3,2) unordered pairs, each in both orientations.
  ASSERT_EQ(data.size(), 2u * (10 + 3));
  int ones = 0;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& s : data) {
    ones += s.label;
    EXPECT_NE(s.video_id, "b");
    EXPECT_TRUE(seen.emplace(s.item_a, s.item_b).second);
    const auto& v = s.video_id == "a" ? videos[0] : videos[2];
    const int sa = StepIndex(videos).step_of(s.video_id, s.item_a);
    const int sb = StepIndex(videos).step_of(s.video_id, s.item_b);
    EXPECT_EQ(s.label, sa < sb ? 1 : 0);
    EXPECT_EQ(s.step_gap, std::abs(sa - sb));
    EXPECT_LE(s.step_gap, static_cast<int>(v.steps.size()) - 1);
  }
  EXPECT_EQ(ones, 13);
}

TEST(PairDataset, CapAndDeterminism) {
  const std::vector<VideoAnnotation> videos = {make_video("a", 8), make_video("b", 8)};
  PairDatasetOptions opts{.kind = ItemKind::kImage, .seed = 5, .max_pairs_per_video = 4};
  const auto data = build_pair_dataset(videos, opts);
  EXPECT_EQ(data.size(), 16u);
  EXPECT_EQ(data, build_pair_dataset(videos, opts));
  opts.seed = 6;
  EXPECT_NE(data, build_pair_dataset(videos, opts));
}

std::vector<PairSample> with_gaps(std::initializer_list<int> gaps) {
  std::vector<PairSample> out;
  for (int g : gaps) out.push_back({"v", "a", "b", 1, g});
  return out;
}

TEST(Curriculum, TwoPhasesStartWithTheLargerGaps) {
  const auto data = with_gaps({1, 2, 3, 4});
  const auto pools = curriculum_schedule(data, 2);
  ASSERT_EQ(pools.size(), 2u);
  EXPECT_EQ(pools[0], (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(pools[1], (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Curriculum, PoolsGrowAndKeepTiedGapsTogether) {
  const auto data = with_gaps({5, 1, 3, 3, 3, 2, 1, 4, 1});
  const auto pools = curriculum_schedule(data, 3);
  ASSERT_EQ(pools.size(), 3u);
  // Descending gaps 5 4 3 3 3 2 1 1 1; thresholds at positions 2 and 5.
  EXPECT_EQ(pools[0], (std::vector<std::size_t>{0, 2, 3, 4, 7}));
  EXPECT_EQ(pools[1], (std::vector<std::size_t>{0, 2, 3, 4, 5, 7}));
  EXPECT_EQ(pools[2].size(), data.size());
  EXPECT_EQ(curriculum_schedule(data, 1).front().size(), data.size());
  EXPECT_THROW(curriculum_schedule(data, 0), ValidationError);
}

TEST(StepGapAccuracy, BucketsFiveAndAboveTogether) {
  const PairOutcome r[] = {{1, true}, {1, false}, {2, true}, {5, true}, {9, false}, {7, true}};
  const auto acc = stepgap_accuracy(r);
  EXPECT_DOUBLE_EQ(acc.at("1"), 0.5);
  EXPECT_DOUBLE_EQ(acc.at("2"), 1.0);
  EXPECT_NEAR(acc.at(">=5"), 2.0 / 3.0, 1e-15);
  EXPECT_FALSE(acc.contains("3"));
  EXPECT_EQ(gap_bucket(4), "4");
  EXPECT_EQ(gap_bucket(12), ">=5");
}

WorldConfig tiny_world() {
  WorldConfig w;
  w.n_videos = 12;
  w.feature_dim = 8;
  w.segments_per_video = 16;
  w.segment_dim = 4;
  w.seed = 9;
  return w;
}

PairwiseConfig tiny_config(ItemKind kind) {
  PairwiseConfig c;
  c.kind = kind;
  c.hidden = {8, 4};
  c.embed_dim = 6;
  c.text_hidden = 5;
  c.epochs = 2;
  c.batch_size = 16;
  c.seed = 4;
  return c;
}

TEST(PairwiseComparator, UntrainedAnswersExactlyOneHalf) {
  const auto world = gen_world(tiny_world());
  const PairwiseComparator model(tiny_config(ItemKind::kImage), &world.images);
  const auto data = build_pair_dataset(world.videos, {.kind = ItemKind::kImage});
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(model.probability(data[i].video_id, data[i].item_a, data[i].item_b), 0.5);
  }
  // 0.5 is never "earlier", so a balanced set scores exactly one half.
  EXPECT_EQ(pair_accuracy(model, data), 0.5);
}

TEST(PairwiseComparator, MatrixAgreesWithSingleProbabilities) {
  const auto world = gen_world(tiny_world());
  PairwiseComparator model(tiny_config(ItemKind::kImage), &world.images);
  Rng rng(2);
  for (auto v : model.parameters().vars()) {
    v.mutable_value() = testing::random_matrix(rng, v.rows(), v.cols(), 0.3);
  }
  const auto& video = world.videos[0];
  std::array<std::string, 5> items;
  for (int k = 0; k < 5; ++k) {
    items[static_cast<std::size_t>(k)] = step_end_image_id(video, k + 1, 25.0);
  }
  const auto p = model.matrix(video.video_id, items);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      if (i != j) EXPECT_NEAR(p[i][j], model.probability(video.video_id, items[i], items[j]), 1e-12);
    }
  }
}

TEST(PairwiseComparator, TrainingIsDeterministicAndLowersTheLoss) {
  const auto world = gen_world(tiny_world());
  const auto data = build_pair_dataset(world.videos, {.kind = ItemKind::kCaption, .seed = 1});
  std::vector<std::string> captions;
  for (const auto& v : world.videos) {
    for (const auto& s : v.steps) captions.push_back(s.caption);
  }
  auto cfg = tiny_config(ItemKind::kCaption);
  cfg.epochs = 4;
  PairwiseComparator a(cfg, Vocabulary::build(captions));
  PairwiseComparator b(cfg, Vocabulary::build(captions));
  const auto log_a = train_pairwise(a, data, {});
  const auto log_b = train_pairwise(b, data, {});
  EXPECT_EQ(log_a, log_b);
  ASSERT_EQ(log_a.size(), 4u);
  EXPECT_LT(log_a.back()["loss"].get<double>(), log_a.front()["loss"].get<double>());
  for (std::size_t i = 0; i < a.parameters().items().size(); ++i) {
    EXPECT_EQ(a.parameters().items()[i].second.value(), b.parameters().items()[i].second.value());
  }
}

TEST(PairwiseComparator, CurriculumPoolSizesFollowTheSchedule) {
  const auto world = gen_world(tiny_world());
  const auto data = build_pair_dataset(world.videos, {.kind = ItemKind::kImage, .seed = 1});
  auto cfg = tiny_config(ItemKind::kImage);
  cfg.curriculum_phases = 3;
  cfg.epochs_per_phase = 1;
  cfg.epochs = 4;
  PairwiseComparator model(cfg, &world.images);
  const auto pools = curriculum_schedule(data, 3);
  const auto log = train_pairwise(model, data, data);
  ASSERT_EQ(log.size(), 4u);
  EXPECT_EQ(log[0]["pool"], pools[0].size());
  EXPECT_EQ(log[1]["pool"], pools[1].size());
  EXPECT_EQ(log[2]["pool"], data.size());
  EXPECT_EQ(log[3]["pool"], data.size());
  EXPECT_TRUE(log[3].contains("val_accuracy"));
  cfg.epochs = 2;
  PairwiseComparator short_model(cfg, &world.images);
  EXPECT_THROW(train_pairwise(short_model, data, {}), ValidationError);
}

TEST(PairwiseComparator, CheckpointRoundTripKeepsPredictions) {
  const auto world = gen_world(tiny_world());
  const auto data = build_pair_dataset(world.videos, {.kind = ItemKind::kImage, .seed = 1});
  PairwiseComparator model(tiny_config(ItemKind::kImage), &world.images);
  const auto log = train_pairwise(model, data, {});
  const auto ckpt = parse_checkpoint(format_checkpoint(model.to_checkpoint(log)));
  EXPECT_EQ(ckpt.model, "pairwise_image");
  EXPECT_EQ(ckpt.log, log);
  const auto back = PairwiseComparator::from_checkpoint(ckpt, &world.images);
  for (std::size_t i = 0; i < 10; ++i) {
    // Tensors are stored as float32.
    EXPECT_NEAR(back.probability("", data[i].item_a, data[i].item_b),
                model.probability("", data[i].item_a, data[i].item_b), 1e-5);
  }
  FeatureStore narrow(3);
  EXPECT_THROW(PairwiseComparator::from_checkpoint(ckpt, &narrow), ValidationError);
  EXPECT_THROW(PairwiseComparator::from_checkpoint(ckpt, nullptr), ValidationError);
}

}  // namespace
}  // namespace ordervqa
