// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ordervqa/composition.hpp"
#include "ordervqa/config.hpp"
#include "ordervqa/random.hpp"

namespace ordervqa {

using nn::Matrix;
using nn::Var;

namespace {

constexpr double kProbFloor = 1e-7;
constexpr double kFaceProbFloor = 1e-12;
constexpr double kMaxLogWidth = 10.0;

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

VideoClip load_clip(const FeatureStore& store, const VideoAnnotation& video) {
  VideoClip clip;
  clip.video_id = video.video_id;
  clip.duration_s = video.duration_s;
  std::vector<const FeatureVector*> rows;
  while (const auto* v = store.find(segment_id(video.video_id, static_cast<int>(rows.size())))) {
    rows.push_back(v);
  }
  if (rows.empty()) throw Error("no segment features for video " + video.video_id);
  clip.features.resize(static_cast<Eigen::Index>(rows.size()), store.dimension());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto values = rows[t]->values();
    for (std::size_t c = 0; c < values.size(); ++c) {
      clip.features(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = values[c];
    }
  }
  return clip;
}

std::vector<Localization> Localizer::localize_topk(const VideoClip& clip,
                                                   const std::string& caption, int k) const {
  return std::vector<Localization>(static_cast<std::size_t>(std::max(1, k)),
                                   localize(clip, caption));
}

Permutation5 order_steps_by_localization(const Localizer& localizer, const VideoClip& clip,
                                         const std::array<std::string, 5>& captions) {
  std::array<double, 5> centre{};
  for (std::size_t i = 0; i < 5; ++i) centre[i] = localizer.localize(clip, captions[i]).span.center();
  std::array<int, 5> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return centre[static_cast<std::size_t>(a)] < centre[static_cast<std::size_t>(b)];
  });
  return Permutation5(order);
}

int select_answer_localize(const Localizer& localizer, const VideoClip& clip,
                           const OrderingQuestion& q) {
  return select_answer_by_edit_distance(order_steps_by_localization(localizer, clip, q.items), q);
}

// ---------------------------------------------------------------------------

void GroundingConfig::validate() const {
  if (max_video_segments < 1) throw ValidationError("max_video_segments must be positive");
  if (max_sentence_tokens < 1) throw ValidationError("max_sentence_tokens must be positive");
  if (pyramid.empty()) throw ValidationError("pyramid needs at least one level");
  int prev = max_video_segments;
  for (std::size_t k = 0; k < pyramid.size(); ++k) {
    if (pyramid[k] < 1 || pyramid[k] >= prev) {
      throw ValidationError("pyramid sizes must be positive and strictly decreasing (level " +
                            std::to_string(k) + " is " + std::to_string(pyramid[k]) + ")");
    }
    if (prev % pyramid[k] != 0) {
      throw ValidationError("pyramid level " + std::to_string(k) + " (" +
                            std::to_string(pyramid[k]) + ") does not divide " +
                            std::to_string(prev));
    }
    prev = pyramid[k];
  }
  if (anchor_ratios.empty()) throw ValidationError("need at least one anchor ratio");
  for (double r : anchor_ratios) {
    if (!(r > 0)) throw ValidationError("anchor ratios must be positive");
  }
  if (!(lambda_over > 0) || !(lambda_loc > 0) || lambda_face < 0) {
    throw ValidationError("loss weights must be positive (face weight may be zero)");
  }
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
  if (embed_dim < 1 || text_hidden < 1 || hidden_dim < 1 || attention_dim < 1) {
    throw ValidationError("grounding widths must be positive");
  }
  if (batch_size < 1 || epochs < 0) throw ValidationError("bad grounding schedule");
}

int level_stride(const GroundingConfig& config, std::size_t level) {
  const int prev = level == 0 ? config.max_video_segments : config.pyramid[level - 1];
  return prev / config.pyramid[level];
}

std::vector<Anchor> make_anchors(const GroundingConfig& config, double seconds_per_segment) {
  std::vector<Anchor> out;
  for (std::size_t k = 0; k < config.pyramid.size(); ++k) {
    const double cell_width =
        static_cast<double>(config.max_video_segments) / config.pyramid[k] * seconds_per_segment;
    for (int i = 0; i < config.pyramid[k]; ++i) {
      const double centre = (i + 0.5) * cell_width;
      for (double ratio : config.anchor_ratios) {
        const double half = 0.5 * ratio * cell_width;
        out.push_back({static_cast<int>(k), i, centre - half, centre + half});
      }
    }
  }
  return out;
}

AnchorLabels assign_labels(std::span<const Anchor> anchors, const TemporalSpan& truth) {
  AnchorLabels labels;
  labels.overlap.reserve(anchors.size());
  std::vector<std::pair<double, double>> targets;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    const double g = interval_tiou(a.start_s, a.end_s, truth.start_s, truth.end_s);
    labels.overlap.push_back(g);
    if (g > 0.5) {
      labels.positive.push_back(static_cast<int>(i));
      targets.emplace_back((truth.center() - a.center()) / a.width(),
                           std::log(truth.width() / a.width()));
    } else {
      labels.negative.push_back(static_cast<int>(i));
    }
  }
  labels.offsets.resize(static_cast<Eigen::Index>(targets.size()), 2);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    labels.offsets(static_cast<Eigen::Index>(i), 0) = targets[i].first;
    labels.offsets(static_cast<Eigen::Index>(i), 1) = targets[i].second;
  }
  return labels;
}

TemporalSpan decode_anchor(const Anchor& anchor, double dc, double dw) {
  const double centre = anchor.center() + dc * anchor.width();
  const double width = anchor.width() * std::exp(std::clamp(dw, -kMaxLogWidth, kMaxLogWidth));
  return {centre - 0.5 * width, centre + 0.5 * width};
}

// ---------------------------------------------------------------------------

Var loss_over(const Var& p, const Matrix& g, std::span<const int> positive,
              std::span<const int> negative) {
  if (positive.empty()) throw ValidationError("loss_over: the positive anchor set is empty");
  if (negative.empty()) throw ValidationError("loss_over: the negative anchor set is empty");
  const Var pc = nn::clamp(p, kProbFloor, 1.0 - kProbFloor);
  const Var per = nn::add(nn::mul(nn::constant(g), nn::log(pc)),
                          nn::mul(nn::constant((1.0 - g.array()).matrix()), nn::log(nn::one_minus(pc))));
  return nn::scale(nn::add(nn::mean(nn::gather_rows(per, positive)),
                           nn::mean(nn::gather_rows(per, negative))),
                   -1.0);
}

Var loss_loc(const Var& predicted, const Matrix& target) {
  if (predicted.rows() == 0) throw ValidationError("loss_loc: no positive anchors");
  return nn::scale(nn::sum(nn::smooth_l1(nn::sub(predicted, nn::constant(target)))),
                   1.0 / static_cast<double>(predicted.rows()));
}

Var loss_face(const Var& probs, const Matrix& labels) {
  if (probs.rows() == 0) throw ValidationError("loss_face: no positive anchors");
  const Var pc = nn::clamp(probs, kFaceProbFloor, 1.0 - kFaceProbFloor);
  const Var per = nn::add(nn::mul(nn::constant(labels), nn::log(pc)),
                          nn::mul(nn::constant((1.0 - labels.array()).matrix()),
                                  nn::log(nn::one_minus(pc))));
  return nn::scale(nn::sum(per), -1.0 / static_cast<double>(probs.rows()));
}

double loss_over(const Matrix& p, const Matrix& g, std::span<const int> positive,
                 std::span<const int> negative) {
  return loss_over(nn::constant(p), g, positive, negative).scalar();
}

double loss_loc(const Matrix& predicted, const Matrix& target) {
  return loss_loc(nn::constant(predicted), target).scalar();
}

double loss_face(const Matrix& probs, const Matrix& labels) {
  return loss_face(nn::constant(probs), labels).scalar();
}

double loss_all(double over, double loc, double face, const LossWeights& weights) {
  return weights.over * over + weights.loc * loc + weights.face * face;
}

// ---------------------------------------------------------------------------

Var fuse(const Var& segments, const Var& sentence_mean, const nn::Linear& w) {
  if (sentence_mean.rows() != 1) throw ValidationError("fuse: sentence mean must be one row");
  if (w.weight.rows() != segments.cols() + sentence_mean.cols()) {
    throw ValidationError("fuse: expected " + std::to_string(w.weight.rows()) +
                          " input channels, got " +
                          std::to_string(segments.cols() + sentence_mean.cols()));
  }
  const Var parts[] = {nn::repeat_rows(sentence_mean, segments.rows()), segments};
  return nn::relu(w(nn::concat_cols(parts)));
}

Var attend(const Var& tokens, const Var& cells, const AttentionParams& params, Var* weights) {
  const auto n = tokens.rows();
  const auto p = cells.rows();
  if (n < 1) throw ValidationError("attend: sentence has no tokens");
  const Var ts = nn::matmul(tokens, params.token);
  const Var cs = nn::add_row(nn::matmul(cells, params.cell), params.bias);
  std::vector<int> cell_idx, tok_idx;
  cell_idx.reserve(static_cast<std::size_t>(p * n));
  tok_idx.reserve(static_cast<std::size_t>(p * n));
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index t = 0; t < n; ++t) {
      cell_idx.push_back(static_cast<int>(i));
      tok_idx.push_back(static_cast<int>(t));
    }
  }
  const Var e = nn::matmul(nn::tanh(nn::add(nn::gather_rows(cs, cell_idx), nn::gather_rows(ts, tok_idx))),
                           params.score);
  const Var alpha = nn::softmax_rows(nn::reshape_row_major(e, p, n));
  if (weights != nullptr) *weights = alpha;
  return nn::matmul(alpha, tokens);
}

Var modulate(const Var& cells, const Var& context, const nn::Linear& lambda, const nn::Linear& psi) {
  const Var centred = nn::sub_row(cells, nn::mean_rows(cells));
  const Var var = nn::mean_rows(nn::square(centred));
  const Var sigma = nn::sqrt(nn::clamp(var, kModulationSigmaFloor * kModulationSigmaFloor,
                                       std::numeric_limits<double>::infinity()));
  const Var normed = nn::div_row(centred, sigma);
  return nn::add(nn::mul(nn::tanh(lambda(context)), normed), nn::tanh(psi(context)));
}

Var temporal_conv(const Var& cells, const nn::Linear& kernel, int stride, Eigen::Index out_rows) {
  return nn::relu(kernel(nn::im2col(cells, 2 * stride, stride, stride / 2, out_rows)));
}

// ---------------------------------------------------------------------------

GroundingModel::GroundingModel(const GroundingConfig& config, Eigen::Index video_dim,
                               Vocabulary vocab)
    : config_(config), video_dim_(video_dim), vocab_(std::move(vocab)) {
  config.validate();
  if (video_dim < 1) throw ValidationError("grounding model needs video features");
  const Eigen::Index text = 2 * config.text_hidden;
  const Eigen::Index d = config.hidden_dim;
  const Eigen::Index att = config.attention_dim;
  const auto n_ratios = static_cast<Eigen::Index>(config.anchor_ratios.size());
  Rng rng(derive_seed(config.seed, "grounding/init"));
  embedding_ = nn::Embedding(rng, static_cast<Eigen::Index>(vocab_.size()), config.embed_dim);
  gru_ = nn::BiGru(rng, config.embed_dim, config.text_hidden);
  fuse_ = nn::Linear(rng, text + video_dim, d);
  attention_.token = nn::parameter(nn::xavier(rng, text, att));
  attention_.cell = nn::parameter(nn::xavier(rng, d, att));
  attention_.bias = nn::parameter(Matrix::Zero(1, att));
  attention_.score = nn::parameter(nn::xavier(rng, att, 1));

  embedding_.register_in(params_, "embedding");
  gru_.register_in(params_, "gru");
  fuse_.register_in(params_, "fuse");
  params_.add("attention.token", attention_.token);
  params_.add("attention.cell", attention_.cell);
  params_.add("attention.bias", attention_.bias);
  params_.add("attention.score", attention_.score);
  for (std::size_t k = 0; k < config.pyramid.size(); ++k) {
    Level level;
    level.lambda = nn::Linear(rng, text, d);
    level.psi = nn::Linear(rng, text, d);
    level.conv = nn::Linear(rng, 2 * level_stride(config, k) * d, d);
    // Zero heads: every anchor starts at overlap 0.5 with no offset.
    level.position = nn::Linear::zeros(d, 3 * n_ratios);
    const std::string prefix = "level" + std::to_string(k);
    level.lambda.register_in(params_, prefix + ".lambda");
    level.psi.register_in(params_, prefix + ".psi");
    level.conv.register_in(params_, prefix + ".conv");
    level.position.register_in(params_, prefix + ".position");
    if (config.face_head) {
      level.face = nn::Linear::zeros(d, kNumFacialAreas);
      level.face.register_in(params_, prefix + ".face");
    }
    levels_.push_back(std::move(level));
  }
}

Var GroundingModel::encode_sentence(const std::string& caption) const {
  return gru_.states(embedding_(vocab_.encode(caption, config_.max_sentence_tokens)));
}

Matrix GroundingModel::pad_segments(const Matrix& features) const {
  if (features.cols() != video_dim_) {
    throw ValidationError("video features have " + std::to_string(features.cols()) +
                          " channels, model expects " + std::to_string(video_dim_));
  }
  Matrix out = Matrix::Zero(config_.max_video_segments, video_dim_);
  const auto n = std::min<Eigen::Index>(features.rows(), config_.max_video_segments);
  out.topRows(n) = features.topRows(n);
  return out;
}

std::vector<Anchor> GroundingModel::anchors(const VideoClip& clip) const {
  if (clip.features.rows() == 0) throw ValidationError("clip " + clip.video_id + " is empty");
  return make_anchors(config_, clip.duration_s / static_cast<double>(clip.features.rows()));
}

GroundingForward GroundingModel::forward(const VideoClip& clip, const std::string& caption) const {
  const Var tokens = encode_sentence(caption);
  Var cells = fuse(nn::constant(pad_segments(clip.features)), nn::mean_rows(tokens), fuse_);
  GroundingForward out;
  std::vector<Var> over, offsets, faces;
  const auto n_ratios = static_cast<Eigen::Index>(config_.anchor_ratios.size());
  int cell_base = 0;
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    const auto& level = levels_[k];
    const Var context = attend(tokens, cells, attention_);
    const Var modulated = modulate(cells, context, level.lambda, level.psi);
    cells = temporal_conv(modulated, level.conv, level_stride(config_, k), config_.pyramid[k]);
    if (!cells.value().allFinite()) {
      throw NumericError("non-finite activation at pyramid level " + std::to_string(k));
    }
    out.maps.push_back(cells);
    const Var head = nn::reshape_row_major(level.position(cells), cells.rows() * n_ratios, 3);
    over.push_back(nn::slice_cols(head, 0, 1));
    offsets.push_back(nn::slice_cols(head, 1, 2));
    if (config_.face_head) faces.push_back(level.face(cells));
    for (Eigen::Index i = 0; i < cells.rows(); ++i) {
      for (Eigen::Index r = 0; r < n_ratios; ++r) {
        out.anchor_cell.push_back(cell_base + static_cast<int>(i));
      }
    }
    cell_base += static_cast<int>(cells.rows());
  }
  out.over_logits = nn::concat_rows(over);
  out.offsets = nn::concat_rows(offsets);
  if (config_.face_head) out.face_logits = nn::concat_rows(faces);
  return out;
}

namespace {

Localization clamp_to_clip(TemporalSpan span, double score, double duration) {
  double s = std::clamp(span.start_s, 0.0, duration);
  double e = std::clamp(span.end_s, 0.0, duration);
  if (!(e > s)) {
    // Collapsed by the clamp: keep a sliver at the nearest edge.
    const double sliver = 1e-3 * duration;
    if (s >= duration) {
      s = duration - sliver;
      e = duration;
    } else {
      e = s + sliver;
    }
  }
  return {{s, e}, score};
}

}  // namespace

std::vector<Localization> GroundingModel::localize_topk(const VideoClip& clip,
                                                        const std::string& caption, int k) const {
  const auto fwd = forward(clip, caption);
  const auto anchor_list = anchors(clip);
  const auto& logits = fwd.over_logits.value();
  std::vector<int> idx(anchor_list.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return logits(a, 0) > logits(b, 0); });
  std::vector<Localization> out;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(idx.size())); ++i) {
    const int a = idx[static_cast<std::size_t>(i)];
    const auto span = decode_anchor(anchor_list[static_cast<std::size_t>(a)],
                                    fwd.offsets.value()(a, 0), fwd.offsets.value()(a, 1));
    out.push_back(clamp_to_clip(span, logistic(logits(a, 0)), clip.duration_s));
  }
  return out;
}

Localization GroundingModel::localize(const VideoClip& clip, const std::string& caption) const {
  return localize_topk(clip, caption, 1).front();
}

Var GroundingModel::query_loss(const VideoClip& clip, const std::string& caption,
                               const TemporalSpan& truth, const std::vector<FacialArea>& areas,
                               double* parts) const {
  const auto anchor_list = anchors(clip);
  const auto labels = assign_labels(anchor_list, truth);
  if (labels.positive.empty() || labels.negative.empty()) return {};
  const auto fwd = forward(clip, caption);
  const Matrix g = Eigen::Map<const Eigen::VectorXd>(labels.overlap.data(),
                                                     static_cast<Eigen::Index>(labels.overlap.size()));
  const Var l_over = loss_over(nn::sigmoid(fwd.over_logits), g, labels.positive, labels.negative);
  const Var l_loc = loss_loc(nn::gather_rows(fwd.offsets, labels.positive), labels.offsets);
  Var total = nn::add(nn::scale(l_over, config_.lambda_over), nn::scale(l_loc, config_.lambda_loc));
  double face_value = 0.0;
  if (config_.face_head && config_.lambda_face > 0) {
    std::vector<int> rows;
    for (int a : labels.positive) rows.push_back(fwd.anchor_cell[static_cast<std::size_t>(a)]);
    Matrix target = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), kNumFacialAreas);
    for (const auto& area : areas) target.col(area.region_id).setOnes();
    const Var l_face = loss_face(nn::sigmoid(nn::gather_rows(fwd.face_logits, rows)), target);
    face_value = l_face.scalar();
    total = nn::add(total, nn::scale(l_face, config_.lambda_face));
  }
  if (parts != nullptr) {
    parts[0] = l_over.scalar();
    parts[1] = l_loc.scalar();
    parts[2] = face_value;
  }
  return total;
}

Checkpoint GroundingModel::to_checkpoint(const nlohmann::json& log) const {
  Checkpoint ckpt;
  ckpt.model = config_.face_head ? "scdmplus" : "scdm";
  ckpt.config = to_json(config_);
  ckpt.config["video_dim"] = video_dim_;
  ckpt.log = log;
  ckpt.vocabulary = vocab_.tokens();
  ckpt.store(params_);
  return ckpt;
}

GroundingModel GroundingModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model != "scdm" && ckpt.model != "scdmplus") {
    throw ValidationError("checkpoint holds a '" + ckpt.model + "' model, not a grounding one");
  }
  nlohmann::json cfg = ckpt.config;
  const auto video_dim = cfg.value("video_dim", 0);
  cfg.erase("video_dim");
  GroundingModel model(grounding_config_from_json(cfg), video_dim, Vocabulary(ckpt.vocabulary));
  ckpt.load_into(model.params_);
  return model;
}

// ---------------------------------------------------------------------------

GroundingData make_grounding_data(const std::vector<VideoAnnotation>& videos,
                                  const FeatureStore& store) {
  GroundingData data;
  for (const auto& video : videos) {
    if (!store.contains(segment_id(video.video_id, 0))) continue;
    data.clips.push_back(load_clip(store, video));
    for (const auto& step : video.steps) {
      data.queries.push_back({data.clips.size() - 1, step.caption, step.span, step.areas});
    }
  }
  return data;
}

nlohmann::json train_grounding(GroundingModel& model, const GroundingData& data) {
  const auto& cfg = model.config();
  if (data.queries.empty()) throw ValidationError("grounding training set is empty");
  nn::Adam adam(model.parameters().vars(),
                {.learning_rate = cfg.learning_rate, .max_grad_norm = cfg.max_grad_norm});
  Rng rng(derive_seed(cfg.seed, "grounding/train"));
  std::vector<std::size_t> order(data.queries.size());
  std::iota(order.begin(), order.end(), 0);
  nlohmann::json log = nlohmann::json::array();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t counted = 0, skipped = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Var> losses;
      for (std::size_t i = at; i < end; ++i) {
        const auto& q = data.queries[order[i]];
        Var l = model.query_loss(data.clips[q.clip], q.caption, q.span, q.areas);
        if (!l.defined()) {
          ++skipped;
          continue;
        }
        if (!std::isfinite(l.scalar())) {
          throw NumericError("grounding loss is " + std::to_string(l.scalar()) + " at epoch " +
                             std::to_string(epoch) + " for video " + data.clips[q.clip].video_id);
        }
        loss_sum += l.scalar();
        ++counted;
        losses.push_back(std::move(l));
      }
      if (losses.empty()) continue;
      const Var batch = nn::scale(nn::sum(nn::concat_rows(losses)),
                                  1.0 / static_cast<double>(losses.size()));
      nn::backward(batch);
      adam.step();
    }
    log.push_back({{"epoch", epoch},
                   {"loss", loss_sum / static_cast<double>(std::max<std::size_t>(1, counted))},
                   {"skipped", skipped}});
  }
  return log;
}

GroundingEval evaluate_grounding(const Localizer& localizer, const GroundingData& data) {
  std::vector<std::vector<TemporalSpan>> predictions;
  std::vector<TemporalSpan> truths;
  for (const auto& q : data.queries) {
    std::vector<TemporalSpan> spans;
    for (const auto& l : localizer.localize_topk(data.clips[q.clip], q.caption, 5)) {
      spans.push_back(l.span);
    }
    predictions.push_back(std::move(spans));
    truths.push_back(q.span);
  }
  GroundingEval eval;
  for (int k : {1, 5}) {
    for (double m : {0.1, 0.3, 0.5, 0.7}) {
      char key[32];
      std::snprintf(key, sizeof(key), "R@%d,tIoU=%.1f", k, m);
      eval.recall[key] = recall_at_k_tiou(predictions, truths, k, m);
    }
  }
  eval.mean_iou = mean_iou(predictions, truths);
  return eval;
}

}  // namespace ordervqa
