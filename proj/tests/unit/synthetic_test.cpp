// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "ordervqa/grounding.hpp"
#include "ordervqa/oracle.hpp"
#include "ordervqa/synthetic.hpp"

namespace ordervqa {
namespace {

WorldConfig small(std::uint64_t seed = 3) {
  WorldConfig w;
  w.n_videos = 20;
  w.feature_dim = 16;
  w.segments_per_video = 32;
  w.segment_dim = 8;
  w.seed = seed;
  return w;
}

nn::RowVector row(const FeatureStore& s, const std::string& id) {
  const auto v = s.at(id).values();
  nn::RowVector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

TEST(SyntheticWorld, DeterministicUnderSeed) {
  const auto a = gen_world(small());
  const auto b = gen_world(small());
  EXPECT_EQ(a.videos, b.videos);
  EXPECT_EQ(format_features(a.images), format_features(b.images));
  EXPECT_EQ(format_features(a.segments), format_features(b.segments));
  EXPECT_NE(format_annotations(a.videos), format_annotations(gen_world(small(4)).videos));
}

TEST(SyntheticWorld, AnnotationsAreValidAndCaptionsUnique) {
  const auto cfg = small();
  const auto w = gen_world(cfg);
  ASSERT_EQ(w.videos.size(), 20u);
  EXPECT_EQ(w.videos[0].video_id, "syn00");
  for (const auto& v : w.videos) {
    EXPECT_TRUE(validate_annotation(v).empty()) << v.video_id;
    EXPECT_GE(v.steps.size(), 5u);
    EXPECT_LE(v.steps.size(), 10u);
    EXPECT_GE(v.duration_s, cfg.min_duration_s);
    EXPECT_LE(v.duration_s, cfg.max_duration_s);
    EXPECT_EQ(v.steps.front().span.start_s, 0.0);
    EXPECT_EQ(v.steps.back().span.end_s, v.duration_s);
    std::set<std::string> captions;
    for (const auto& s : v.steps) {
      EXPECT_TRUE(captions.insert(s.caption).second);
      // The caption names the step's facial area.
      ASSERT_EQ(s.areas.size(), 1u);
      EXPECT_TRUE(s.caption.ends_with(" on a" + std::to_string(s.areas[0].region_id)));
      // Every planned frame has a feature.
      for (long long f : plan_frames(s.span, cfg.fps).frame_indices) {
        EXPECT_TRUE(w.images.contains(image_id(v.video_id, s.index, f)));
      }
    }
    EXPECT_TRUE(w.images.contains(image_id(v.video_id, 0, 0)));
    EXPECT_EQ(load_clip(w.segments, v).features.rows(), 32);
  }
}

TEST(SyntheticWorld, NoiselessImagesAdvanceExactlyAlongTheDirection) {
  auto cfg = small();
  cfg.noise = 0.0;
  cfg.effect_magnitude = 0.75;
  const auto w = gen_world(cfg);
  for (const auto& v : w.videos) {
    double prev = row(w.images, image_id(v.video_id, 0, 0)).dot(w.direction);
    for (const auto& s : v.steps) {
      const double cur = row(w.images, step_end_image_id(v, s.index, cfg.fps)).dot(w.direction);
      // float32 storage.
      EXPECT_NEAR(cur - prev, 0.75, 1e-5);
      prev = cur;
    }
  }
  EXPECT_TRUE(std::isinf(cfg.signal_to_noise()));
}

TEST(SyntheticWorld, DefaultNoiseKeepsAdjacentStepsSeparable) {
  const auto cfg = small();
  EXPECT_GE(cfg.signal_to_noise(), 4.0);
  const auto w = gen_world(cfg);
  int right = 0, total = 0;
  for (const auto& v : w.videos) {
    for (std::size_t i = 0; i + 1 < v.steps.size(); ++i) {
      const auto a = row(w.images, step_end_image_id(v, v.steps[i].index, cfg.fps));
      const auto b = row(w.images, step_end_image_id(v, v.steps[i + 1].index, cfg.fps));
      right += (b - a).dot(w.direction) > 0 ? 1 : 0;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(right) / total, 0.99);
}

TEST(SyntheticWorld, SegmentsFollowTheActiveStep) {
  auto cfg = small();
  cfg.segment_noise = 0.0;
  const auto w = gen_world(cfg);
  const auto& v = w.videos[0];
  const auto clip = load_clip(w.segments, v);
  const double seg = v.duration_s / cfg.segments_per_video;
  // Without noise, segments in the same step are identical and segments in
  // different steps differ.
  for (Eigen::Index t = 1; t < clip.features.rows(); ++t) {
    auto step_of = [&](Eigen::Index i) {
      const double c = (static_cast<double>(i) + 0.5) * seg;
      for (const auto& s : v.steps) {
        if (c < s.span.end_s) return s.index;
      }
      return v.steps.back().index;
    };
    const bool same = step_of(t) == step_of(t - 1);
    EXPECT_EQ(clip.features.row(t) == clip.features.row(t - 1), same) << t;
  }
}

TEST(SyntheticWorld, OraclesAnswerFromAnnotations) {
  const auto w = gen_world(small());
  const auto& v = w.videos[1];
  const PairwiseOracle pairwise(w.videos);
  const auto first = step_end_image_id(v, 1, 25.0);
  const auto last = step_end_image_id(v, static_cast<int>(v.steps.size()), 25.0);
  EXPECT_EQ(pairwise.probability(v.video_id, first, last), 1.0);
  EXPECT_EQ(pairwise.probability(v.video_id, last, first), 0.0);
  EXPECT_EQ(pairwise.probability(v.video_id, v.steps[0].caption, v.steps[2].caption), 1.0);
  EXPECT_THROW(pairwise.probability(v.video_id, "nope", first), Error);
  const LocalizerOracle loc(w.videos);
  const VideoClip clip{v.video_id, nn::Matrix::Zero(1, 1), v.duration_s};
  EXPECT_EQ(loc.localize(clip, v.steps[3].caption).span, v.steps[3].span);
}

TEST(WorldConfig, Validation) {
  auto c = small();
  c.n_cosmetics = 4;
  EXPECT_THROW(gen_world(c), ValidationError);
  c = small();
  c.id_prefix = "a/b";
  EXPECT_THROW(gen_world(c), ValidationError);
  c = small();
  c.segments_per_video = 3;
  EXPECT_THROW(gen_world(c), ValidationError);
  EXPECT_EQ(synthetic_caption(3, 1, 20), "apply c3 with t1 on a20");
}

}  // namespace
}  // namespace ordervqa
