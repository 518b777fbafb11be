// SPDX-License-Identifier: Apache-2.0
//
// Synthetic makeup corpora with known ground truth. Every step applies a
// cosmetic with a tool on one facial area; the caption names all three.
// The face image after step k is the video's base face plus the summed
// effects of steps 1..k plus noise, so order is linearly recoverable.
// Video segments carry the active step's caption signature plus noise.

#ifndef ORDERVQA_SYNTHETIC_HPP_
#define ORDERVQA_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ordervqa/io.hpp"
#include "ordervqa/layers.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

struct WorldConfig {
  int n_videos = 500;
  int min_steps = 5;
  int max_steps = 10;
  int feature_dim = 64;
  /// Length of each step's push along the shared progress direction.
  double effect_magnitude = 1.0;
  /// Standard deviation of per-coordinate image noise.
  double noise = 0.15;
  /// Scale of the caption-specific part of each effect (orthogonal to the
  /// progress direction).
  double token_scale = 1.0;
  double base_scale = 1.0;
  int n_cosmetics = 40;
  int n_tools = 8;
  /// Probability that a video applies its cosmetics in ascending id order,
  /// which gives caption-only ordering models something to learn.
  double caption_order_bias = 0.8;
  double min_duration_s = 120.0;
  double max_duration_s = 600.0;
  double fps = 25.0;
  int segments_per_video = 64;
  int segment_dim = 32;
  double segment_signal = 1.0;
  double segment_noise = 0.5;
  std::string id_prefix = "syn";
  std::uint64_t seed = 0;

  /// Throws ValidationError on the first bad field.
  void validate() const;
  /// effect_magnitude / noise (infinite without noise).
  double signal_to_noise() const;
};

struct SyntheticWorld {
  std::vector<VideoAnnotation> videos;
  /// Every planned frame of every step plus "<video>/0/0".
  FeatureStore images;
  /// "<video>@<segment>" rows.
  FeatureStore segments;
  /// Unit progress direction of the image space.
  nn::RowVector direction;
};

SyntheticWorld gen_world(const WorldConfig& config);

/// Caption of a step using cosmetic `c`, tool `t` and area `a`.
std::string synthetic_caption(int cosmetic, int tool, int area);

}  // namespace ordervqa

#endif  // ORDERVQA_SYNTHETIC_HPP_
