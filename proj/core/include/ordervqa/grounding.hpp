// SPDX-License-Identifier: Apache-2.0
//
// Temporal sentence grounding with semantic conditioned dynamic modulation.
// The caption is encoded by a bidirectional GRU; its mean state is fused
// with every video segment; a pyramid of strided temporal convolutions is
// modulated per cell by an attention summary of the caption; each pyramid
// cell carries anchors whose overlap and offsets are regressed. The "plus"
// variant adds a 24-way facial-area head trained as an auxiliary task.

#ifndef ORDERVQA_GROUNDING_HPP_
#define ORDERVQA_GROUNDING_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordervqa/checkpoint.hpp"
#include "ordervqa/io.hpp"
#include "ordervqa/layers.hpp"
#include "ordervqa/metrics.hpp"
#include "ordervqa/text.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

/// Segment features of one video plus its duration.
struct VideoClip {
  std::string video_id;
  nn::Matrix features;  // segments x dim
  double duration_s = 0.0;
};

/// Reads "<video_id>@<segment>" rows 0, 1, ... until the first gap.
/// Throws if the video has no segments.
VideoClip load_clip(const FeatureStore& store, const VideoAnnotation& video);

class Localizer {
 public:
  virtual ~Localizer() = default;
  virtual Localization localize(const VideoClip& clip, const std::string& caption) const = 0;
  /// Best-first predictions; at least `k` of them.
  virtual std::vector<Localization> localize_topk(const VideoClip& clip,
                                                  const std::string& caption, int k) const;
};

/// Sorts captions by the centre of their localized span; equal centres keep
/// presentation order.
Permutation5 order_steps_by_localization(const Localizer& localizer, const VideoClip& clip,
                                         const std::array<std::string, 5>& captions);
int select_answer_localize(const Localizer& localizer, const VideoClip& clip,
                           const OrderingQuestion& q);

// ---------------------------------------------------------------------------
// Configuration and anchors

struct GroundingConfig {
  int max_video_segments = 1024;
  int max_sentence_tokens = 20;
  std::vector<int> pyramid = {256, 128, 64, 32, 16};
  std::vector<double> anchor_ratios = {1.0, 1.5};
  double lambda_over = 100.0;
  double lambda_loc = 10.0;
  double lambda_face = 0.5;
  double learning_rate = 1e-4;
  int embed_dim = 64;
  int text_hidden = 64;  // per direction
  int hidden_dim = 64;   // fused channels
  int attention_dim = 64;
  int epochs = 10;
  int batch_size = 8;
  double max_grad_norm = 0.0;
  /// Facial-area head and loss ("plus" variant).
  bool face_head = true;
  std::uint64_t seed = 0;

  /// Throws ValidationError describing the first inconsistency.
  void validate() const;
};

/// Stride of pyramid level `k` (input rows / output rows).
int level_stride(const GroundingConfig& config, std::size_t level);

struct Anchor {
  int level = 0;
  int cell = 0;
  double start_s = 0.0;  // may fall outside [0, duration]
  double end_s = 0.0;
  double center() const { return 0.5 * (start_s + end_s); }
  double width() const { return end_s - start_s; }
};

/// Anchors ordered by (level, cell, ratio). `seconds_per_segment` converts
/// segment units to seconds.
std::vector<Anchor> make_anchors(const GroundingConfig& config, double seconds_per_segment);

struct AnchorLabels {
  std::vector<double> overlap;  // tIoU per anchor
  std::vector<int> positive;    // indices with tIoU > 0.5
  std::vector<int> negative;
  nn::Matrix offsets;  // positives x 2: (centre, log-width) targets
};

AnchorLabels assign_labels(std::span<const Anchor> anchors, const TemporalSpan& truth);

/// Applies predicted offsets: centre + dc * width, width * exp(dw).
TemporalSpan decode_anchor(const Anchor& anchor, double dc, double dw);

// ---------------------------------------------------------------------------
// Losses. Probabilities are clamped before taking logs.

/// Soft-target cross-entropy averaged separately over positive and negative
/// anchors, then summed. `p` and `g` are column vectors over all anchors.
nn::Var loss_over(const nn::Var& p, const nn::Matrix& g, std::span<const int> positive,
                  std::span<const int> negative);
/// Smooth-L1 on (dc, dw) of positive anchors, averaged over positives.
nn::Var loss_loc(const nn::Var& predicted, const nn::Matrix& target);
/// Multilabel cross-entropy summed over the 24 areas, averaged over
/// positives (one row per positive anchor).
nn::Var loss_face(const nn::Var& probs, const nn::Matrix& labels);

double loss_over(const nn::Matrix& p, const nn::Matrix& g, std::span<const int> positive,
                 std::span<const int> negative);
double loss_loc(const nn::Matrix& predicted, const nn::Matrix& target);
double loss_face(const nn::Matrix& probs, const nn::Matrix& labels);

struct LossWeights {
  double over = 100.0;
  double loc = 10.0;
  double face = 0.5;
};
double loss_all(double over, double loc, double face, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Model blocks, exposed for testing.

/// ReLU(W [s_mean ; v_t] + b) for every segment row.
nn::Var fuse(const nn::Var& segments, const nn::Var& sentence_mean, const nn::Linear& w);

struct AttentionParams {
  nn::Var token;  // text x att
  nn::Var cell;   // channels x att
  nn::Var bias;   // 1 x att
  nn::Var score;  // att x 1
};

/// Per cell, softmax over tokens of score(tanh(token(s_n) + cell(a))) and
/// the weighted token sum (cells x text). `weights` receives the softmax
/// (cells x tokens) when non-null.
nn::Var attend(const nn::Var& tokens, const nn::Var& cells, const AttentionParams& params,
               nn::Var* weights = nullptr);

inline constexpr double kModulationSigmaFloor = 1e-5;

/// lambda(c) * (a - mean) / std + psi(c), with mean and std taken per
/// channel across the level's cells and std floored.
nn::Var modulate(const nn::Var& cells, const nn::Var& context, const nn::Linear& lambda,
                 const nn::Linear& psi);

/// ReLU of a strided temporal convolution producing `out_rows` cells. The
/// kernel spans 2*stride input rows with stride/2 rows of zero padding in
/// front, so each window is centred on the input rows its cell covers.
nn::Var temporal_conv(const nn::Var& cells, const nn::Linear& kernel, int stride,
                      Eigen::Index out_rows);

struct GroundingForward {
  std::vector<nn::Var> maps;  // one per pyramid level
  nn::Var over_logits;        // anchors x 1
  nn::Var offsets;            // anchors x 2
  nn::Var face_logits;        // cells (all levels) x 24; undefined without face head
  std::vector<int> anchor_cell;  // anchor -> row of face_logits
};

class GroundingModel : public Localizer {
 public:
  GroundingModel(const GroundingConfig& config, Eigen::Index video_dim, Vocabulary vocab);

  const GroundingConfig& config() const { return config_; }
  const nn::ParameterSet& parameters() const { return params_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  Eigen::Index video_dim() const { return video_dim_; }

  /// Token states (tokens x 2H).
  nn::Var encode_sentence(const std::string& caption) const;
  /// Pads or truncates to max_video_segments rows.
  nn::Matrix pad_segments(const nn::Matrix& features) const;
  GroundingForward forward(const VideoClip& clip, const std::string& caption) const;
  std::vector<Anchor> anchors(const VideoClip& clip) const;

  Localization localize(const VideoClip& clip, const std::string& caption) const override;
  std::vector<Localization> localize_topk(const VideoClip& clip, const std::string& caption,
                                          int k) const override;

  /// Weighted total loss of one query; L_over, L_loc, L_face are written to
  /// `parts` when non-null. Returns an undefined Var when the query has no
  /// positive or no negative anchor.
  nn::Var query_loss(const VideoClip& clip, const std::string& caption, const TemporalSpan& truth,
                     const std::vector<FacialArea>& areas, double* parts = nullptr) const;

  Checkpoint to_checkpoint(const nlohmann::json& log) const;
  static GroundingModel from_checkpoint(const Checkpoint& ckpt);

 private:
  struct Level {
    nn::Linear lambda, psi, conv, position, face;
  };

  GroundingConfig config_;
  Eigen::Index video_dim_;
  Vocabulary vocab_;
  nn::Embedding embedding_;
  nn::BiGru gru_;
  nn::Linear fuse_;
  AttentionParams attention_;
  std::vector<Level> levels_;
  nn::ParameterSet params_;
};

struct GroundingQuery {
  std::size_t clip = 0;  // index into GroundingData::clips
  std::string caption;
  TemporalSpan span;
  std::vector<FacialArea> areas;
};

struct GroundingData {
  std::vector<VideoClip> clips;
  std::vector<GroundingQuery> queries;
};

/// One query per annotated step of every video with segment features.
GroundingData make_grounding_data(const std::vector<VideoAnnotation>& videos,
                                  const FeatureStore& store);

/// Adam over mean per-query losses. The log records the epoch loss and how
/// many queries were skipped for lacking positive or negative anchors.
nlohmann::json train_grounding(GroundingModel& model, const GroundingData& data);

struct GroundingEval {
  std::map<std::string, double> recall;  // "R@1,tIoU=0.5" -> fraction
  double mean_iou = 0.0;
};
GroundingEval evaluate_grounding(const Localizer& localizer, const GroundingData& data);

}  // namespace ordervqa

#endif  // ORDERVQA_GROUNDING_HPP_
