// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "ordervqa/random.hpp"

namespace ordervqa {

using nn::Matrix;
using nn::RowVector;

void WorldConfig::validate() const {
  if (n_videos < 1) throw ValidationError("world.n_videos must be positive");
  if (min_steps < 1 || max_steps < min_steps) {
    throw ValidationError("world step range must satisfy 1 <= min_steps <= max_steps");
  }
  if (feature_dim < 2) throw ValidationError("world.feature_dim must be at least 2");
  if (!(effect_magnitude > 0)) throw ValidationError("world.effect_magnitude must be > 0");
  if (!(noise >= 0) || !(token_scale >= 0) || !(base_scale >= 0)) {
    throw ValidationError("world noise and scales must be non-negative");
  }
  if (n_cosmetics < max_steps) {
    throw ValidationError("world.n_cosmetics must be at least max_steps so captions stay unique");
  }
  if (n_tools < 1) throw ValidationError("world.n_tools must be positive");
  if (caption_order_bias < 0 || caption_order_bias > 1) {
    throw ValidationError("world.caption_order_bias must lie in [0, 1]");
  }
  if (!(min_duration_s > 0) || max_duration_s < min_duration_s) {
    throw ValidationError("world duration range must satisfy 0 < min <= max");
  }
  if (!(fps > 0)) throw ValidationError("world.fps must be positive");
  if (segments_per_video < max_steps) {
    throw ValidationError("world.segments_per_video must be at least max_steps");
  }
  if (segment_dim < 1 || !(segment_signal >= 0) || !(segment_noise >= 0)) {
    throw ValidationError("world segment settings must be non-negative");
  }
  if (id_prefix.empty() || id_prefix.find_first_of("/@") != std::string::npos) {
    throw ValidationError("world.id_prefix must be non-empty without '/' or '@'");
  }
}

double WorldConfig::signal_to_noise() const {
  return noise > 0 ? effect_magnitude / noise : std::numeric_limits<double>::infinity();
}

std::string synthetic_caption(int cosmetic, int tool, int area) {
  return "apply c" + std::to_string(cosmetic) + " with t" + std::to_string(tool) + " on a" +
         std::to_string(area);
}

namespace {

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng, 0.0, scale);
  }
  return m;
}

FeatureVector to_feature(const RowVector& v) {
  std::vector<float> values(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) values[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  return FeatureVector(std::move(values));
}

}  // namespace

SyntheticWorld gen_world(const WorldConfig& config) {
  config.validate();
  const Eigen::Index d = config.feature_dim;
  Rng tables(derive_seed(config.seed, "world/tables"));

  RowVector direction = gaussian(tables, 1, d, 1.0).row(0);
  direction.normalize();
  // Token vectors live in the complement of the progress direction.
  auto orthogonal = [&](Matrix m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m.row(r) -= m.row(r).dot(direction) * direction;
    }
    return m;
  };
  const double per_token = config.token_scale / std::sqrt(static_cast<double>(d));
  const Matrix cosmetic_vec = orthogonal(gaussian(tables, config.n_cosmetics, d, per_token));
  const Matrix tool_vec = orthogonal(gaussian(tables, config.n_tools, d, per_token));
  const Matrix area_vec = orthogonal(gaussian(tables, kNumFacialAreas, d, per_token));
  const Eigen::Index sd = config.segment_dim;
  const Matrix seg_cosmetic = gaussian(tables, config.n_cosmetics, sd, 1.0);
  const Matrix seg_tool = gaussian(tables, config.n_tools, sd, 0.5);
  const Matrix seg_area = gaussian(tables, kNumFacialAreas, sd, 0.5);

  SyntheticWorld world;
  world.direction = direction;
  world.images = FeatureStore(static_cast<std::uint32_t>(d));
  world.segments = FeatureStore(static_cast<std::uint32_t>(sd));
  const int width = static_cast<int>(std::to_string(config.n_videos - 1).size());

  for (int v = 0; v < config.n_videos; ++v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%0*d", config.id_prefix.c_str(), width, v);
    const std::string vid = buf;
    Rng rng(derive_seed(config.seed, "world/video/" + vid));

    VideoAnnotation video;
    video.video_id = vid;
    const int k = uniform_int(rng, config.min_steps, config.max_steps);
    video.duration_s = std::round(uniform_real(rng, config.min_duration_s, config.max_duration_s) * 100.0) / 100.0;

    std::vector<int> cosmetics(static_cast<std::size_t>(config.n_cosmetics));
    std::iota(cosmetics.begin(), cosmetics.end(), 0);
    std::shuffle(cosmetics.begin(), cosmetics.end(), rng);
    cosmetics.resize(static_cast<std::size_t>(k));
    if (uniform_real(rng, 0.0, 1.0) < config.caption_order_bias) {
      std::sort(cosmetics.begin(), cosmetics.end());
    }

    // Spans tile the video with random proportions.
    std::vector<double> weights(static_cast<std::size_t>(k));
    for (auto& w : weights) w = uniform_real(rng, 0.5, 1.5);
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double at = 0.0;
    std::vector<int> tools, areas;
    for (int s = 0; s < k; ++s) {
      StepAnnotation step;
      step.index = s + 1;
      const int tool = uniform_int(rng, 0, config.n_tools - 1);
      const int area = uniform_int(rng, 0, kNumFacialAreas - 1);
      tools.push_back(tool);
      areas.push_back(area);
      step.caption = synthetic_caption(cosmetics[static_cast<std::size_t>(s)], tool, area);
      const double end = s + 1 == k ? video.duration_s
                                    : std::round((at + video.duration_s * weights[static_cast<std::size_t>(s)] / total) * 100.0) / 100.0;
      step.span = {at, end};
      step.areas = {FacialArea{area}};
      at = end;
      video.steps.push_back(std::move(step));
    }

    // Image features.
    const RowVector base = gaussian(rng, 1, d, config.base_scale).row(0);
    auto noisy = [&](const RowVector& clean) {
      RowVector out = clean;
      for (Eigen::Index i = 0; i < d; ++i) out(i) += normal(rng, 0.0, config.noise);
      return out;
    };
    world.images.insert(image_id(vid, 0, 0), to_feature(noisy(base)));
    RowVector cumulative = base;
    for (int s = 0; s < k; ++s) {
      cumulative += config.effect_magnitude * direction +
                    cosmetic_vec.row(cosmetics[static_cast<std::size_t>(s)]) +
                    tool_vec.row(tools[static_cast<std::size_t>(s)]) +
                    area_vec.row(areas[static_cast<std::size_t>(s)]);
      const auto plan = plan_frames(video.steps[static_cast<std::size_t>(s)].span, config.fps);
      std::vector<long long> frames = plan.frame_indices;
      std::sort(frames.begin(), frames.end());
      frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
      for (long long f : frames) {
        world.images.insert(image_id(vid, s + 1, f), to_feature(noisy(cumulative)));
      }
    }

    // Segment features.
    const RowVector seg_base = gaussian(rng, 1, sd, 0.5).row(0);
    const double seg_seconds = video.duration_s / config.segments_per_video;
    for (int t = 0; t < config.segments_per_video; ++t) {
      const double centre = (t + 0.5) * seg_seconds;
      std::size_t s = 0;
      while (s + 1 < video.steps.size() && centre >= video.steps[s].span.end_s) ++s;
      RowVector row = seg_base + config.segment_signal * (seg_cosmetic.row(cosmetics[s]) +
                                                          seg_tool.row(tools[s]) +
                                                          seg_area.row(areas[s]));
      for (Eigen::Index i = 0; i < sd; ++i) row(i) += normal(rng, 0.0, config.segment_noise);
      world.segments.insert(segment_id(vid, t), to_feature(row));
    }
    world.videos.push_back(std::move(video));
  }
  return world;
}

}  // namespace ordervqa
