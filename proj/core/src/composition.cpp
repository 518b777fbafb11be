// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/composition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ordervqa/config.hpp"
#include "ordervqa/metrics.hpp"
#include "ordervqa/random.hpp"

namespace ordervqa {

using nn::Matrix;
using nn::Var;

std::vector<double> CompositionScorer::scores(const std::string& video_id,
                                              const std::string& source,
                                              std::span<const std::string> captions,
                                              std::span<const std::string> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(score(video_id, source, captions, c));
  return out;
}

std::string CompositionTriplet::text() const {
  std::string out;
  for (const auto& c : captions) {
    if (!out.empty()) out.push_back(' ');
    out += c;
  }
  return out;
}

namespace {

std::string join(std::span<const std::string> captions) {
  std::string out;
  for (const auto& c : captions) {
    if (!out.empty()) out.push_back(' ');
    out += c;
  }
  return out;
}

}  // namespace

std::string format_triplets(std::span<const CompositionTriplet> triplets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : triplets) {
    arr.push_back({{"video_id", t.video_id},
                   {"source", t.source},
                   {"captions", t.captions},
                   {"target", t.target}});
  }
  return nlohmann::json{{"triplets", std::move(arr)}}.dump(2) + "\n";
}

std::vector<CompositionTriplet> parse_triplets(std::string_view text) {
  const nlohmann::json doc = parse_json_document(text);
  if (!doc.is_object() || !doc.contains("triplets") || !doc["triplets"].is_array()) {
    throw ParseError("triplets document needs a \"triplets\" array");
  }
  std::vector<CompositionTriplet> out;
  for (const auto& item : doc["triplets"]) {
    CompositionTriplet t;
    try {
      t.video_id = item.at("video_id").get<std::string>();
      t.source = item.at("source").get<std::string>();
      t.captions = item.at("captions").get<std::vector<std::string>>();
      t.target = item.at("target").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("triplet " + std::to_string(out.size()) + ": " + e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> step_end_images(const VideoAnnotation& video, double fps) {
  std::vector<std::string> out;
  out.reserve(video.steps.size());
  for (const auto& s : video.steps) out.push_back(step_end_image_id(video, s.index, fps));
  return out;
}

std::vector<CompositionTriplet> build_triplets(const VideoAnnotation& video, int n_parts,
                                               std::uint64_t seed, double fps) {
  const int k = static_cast<int>(video.steps.size());
  const int parts = n_parts > 0 ? n_parts : std::max(1, k / 2);
  if (k < parts || k == 0) return {};
  Rng rng(derive_seed(seed, "triplets/" + video.video_id));
  // Choose parts-1 distinct cut positions among the k-1 gaps between steps.
  std::vector<int> gaps(static_cast<std::size_t>(k - 1));
  std::iota(gaps.begin(), gaps.end(), 1);
  std::shuffle(gaps.begin(), gaps.end(), rng);
  std::vector<int> cuts(gaps.begin(), gaps.begin() + (parts - 1));
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(k);

  const auto images = step_end_images(video, fps);
  std::vector<CompositionTriplet> out;
  int begin = 0;
  for (int end : cuts) {
    CompositionTriplet t;
    t.video_id = video.video_id;
    t.source = begin == 0 ? image_id(video.video_id, 0, 0)
                          : images[static_cast<std::size_t>(begin - 1)];
    for (int s = begin; s < end; ++s) {
      t.captions.push_back(video.steps[static_cast<std::size_t>(s)].caption);
    }
    t.target = images[static_cast<std::size_t>(end - 1)];
    out.push_back(std::move(t));
    begin = end;
  }
  return out;
}

// ---------------------------------------------------------------------------

CompositionModel::CompositionModel(const CompositionConfig& config,
                                   const FeatureStore* features, Vocabulary vocab)
    : config_(config), features_(features), vocab_(std::move(vocab)) {
  if (features == nullptr || features->dimension() == 0) {
    throw ValidationError("composition model needs a non-empty feature store");
  }
  if (config.embed_dim < 1 || config.text_hidden < 1 || config.joint_dim < 0) {
    throw ValidationError("composition widths must be positive");
  }
  const Eigen::Index d = features->dimension();
  const Eigen::Index e = config.joint_dim > 0 ? config.joint_dim : d;
  const Eigen::Index h = config.text_hidden;
  Rng rng(derive_seed(config.seed, "composition/init"));
  proj_ = nn::Linear(rng, d, e);
  embedding_ = nn::Embedding(rng, static_cast<Eigen::Index>(vocab_.size()), config.embed_dim);
  lstm_ = nn::Lstm(rng, config.embed_dim, h);
  gate1_ = nn::Linear(rng, e + h, e);
  gate2_ = nn::Linear(rng, e, e);
  // Gate starts mostly open so the untrained map stays close to the source.
  gate2_.bias.mutable_value().setConstant(2.0);
  res1_ = nn::Linear(rng, e + h, e);
  res2_ = nn::Linear(rng, e, e);
  w_gate_ = nn::parameter(Matrix::Constant(1, 1, 1.0));
  w_res_ = nn::parameter(Matrix::Constant(1, 1, 1.0));
  if (!(config.init_scale > 0)) throw ValidationError("composition init_scale must be positive");
  log_scale_ = nn::parameter(Matrix::Constant(1, 1, std::log(config.init_scale)));

  proj_.register_in(params_, "proj");
  embedding_.register_in(params_, "embedding");
  lstm_.register_in(params_, "lstm");
  gate1_.register_in(params_, "gate.0");
  gate2_.register_in(params_, "gate.1");
  res1_.register_in(params_, "residual.0");
  res2_.register_in(params_, "residual.1");
  params_.add("w_gate", w_gate_);
  params_.add("w_residual", w_res_);
  params_.add("log_scale", log_scale_);
}

Var CompositionModel::features(std::span<const std::string> ids) const {
  if (features_ == nullptr) throw Error("composition model has no feature store attached");
  Matrix m(static_cast<Eigen::Index>(ids.size()), features_->dimension());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto values = features_->at(ids[i]).values();
    for (std::size_t c = 0; c < values.size(); ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = values[c];
    }
  }
  return nn::constant(std::move(m));
}

Var CompositionModel::project(const Var& x) const { return proj_(x); }

Var CompositionModel::encode_text(const std::string& text) const {
  return lstm_.last_state(embedding_(vocab_.encode(text, config_.max_tokens)));
}

Var CompositionModel::compose(const Var& source, const std::string& text) const {
  const Var x = project(source);
  if (text.empty()) return x;
  const Var parts[] = {x, encode_text(text)};
  const Var joint = nn::concat_cols(parts);
  const Var gate = nn::sigmoid(gate2_(nn::relu(gate1_(joint))));
  const Var residual = res2_(nn::relu(res1_(joint)));
  return nn::add(nn::matmul(w_gate_, nn::mul(gate, x)), nn::matmul(w_res_, residual));
}

Var CompositionModel::similarity(const Var& composed, const Var& targets) const {
  const Var a = nn::normalize_rows(composed);
  const Var b = nn::normalize_rows(targets);
  const Var kappa = nn::matmul(nn::exp(log_scale_),
                               nn::constant(Matrix::Ones(1, composed.cols())));
  return nn::matmul(nn::mul_row(a, kappa), nn::transpose(b));
}

double CompositionModel::scale() const { return std::exp(log_scale_.scalar()); }

double CompositionModel::score(const std::string& video_id, const std::string& source,
                               std::span<const std::string> captions,
                               const std::string& candidate) const {
  const std::string one[] = {candidate};
  return scores(video_id, source, captions, one).front();
}

std::vector<double> CompositionModel::scores(const std::string&, const std::string& source,
                                             std::span<const std::string> captions,
                                             std::span<const std::string> candidates) const {
  if (candidates.empty()) return {};
  const std::string src[] = {source};
  const Var composed = compose(features(src), join(captions));
  const Var sim = similarity(composed, project(features(candidates)));
  std::vector<double> out(candidates.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = sim.value()(0, static_cast<Eigen::Index>(i));
  }
  return out;
}

Var CompositionModel::batch_loss(std::span<const CompositionTriplet* const> batch) const {
  std::vector<std::string> targets;
  std::map<std::string, int> slot;
  std::vector<std::string> sources;
  std::vector<std::pair<int, int>> positive;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = *batch[i];
    const auto [it, fresh] = slot.emplace(t.target, static_cast<int>(targets.size()));
    if (fresh) targets.push_back(t.target);
    sources.push_back(t.source);
    positive.emplace_back(static_cast<int>(i), it->second);
  }
  const Var src = features(sources);
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rows.push_back(compose(nn::slice_rows(src, static_cast<Eigen::Index>(i), 1), batch[i]->text()));
  }
  const Var logits = similarity(nn::concat_rows(rows), project(features(targets)));
  return nn::scale(nn::mean(nn::gather_entries(nn::log_softmax_rows(logits), positive)), -1.0);
}

Checkpoint CompositionModel::to_checkpoint(const nlohmann::json& log) const {
  Checkpoint ckpt;
  ckpt.model = "composition";
  ckpt.config = to_json(config_);
  ckpt.config["input_dim"] = features_->dimension();
  ckpt.log = log;
  ckpt.vocabulary = vocab_.tokens();
  ckpt.store(params_);
  return ckpt;
}

CompositionModel CompositionModel::from_checkpoint(const Checkpoint& ckpt,
                                                   const FeatureStore* features) {
  if (ckpt.model != "composition") {
    throw ValidationError("checkpoint holds a '" + ckpt.model + "' model, not a composition one");
  }
  nlohmann::json cfg = ckpt.config;
  const auto input_dim = cfg.value("input_dim", 0u);
  cfg.erase("input_dim");
  if (features == nullptr) throw ValidationError("composition model needs --features");
  if (features->dimension() != input_dim) {
    throw ValidationError("feature dimension " + std::to_string(features->dimension()) +
                          " does not match checkpoint dimension " + std::to_string(input_dim));
  }
  CompositionModel model(composition_config_from_json(cfg), features,
                         Vocabulary(ckpt.vocabulary));
  ckpt.load_into(model.params_);
  return model;
}

nlohmann::json train_composition(CompositionModel& model,
                                 std::span<const CompositionTriplet> triplets) {
  const auto& cfg = model.config();
  if (cfg.batch_size < 2) {
    throw ValidationError("contrastive training needs batch_size >= 2, got " +
                          std::to_string(cfg.batch_size));
  }
  if (triplets.empty()) throw ValidationError("composition training set is empty");

  std::map<std::string, std::vector<const CompositionTriplet*>> by_video;
  for (const auto& t : triplets) by_video[t.video_id].push_back(&t);
  std::vector<const std::vector<const CompositionTriplet*>*> videos;
  for (const auto& [id, list] : by_video) videos.push_back(&list);

  nn::Adam adam(model.parameters().vars(), {.learning_rate = cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "composition/train"));
  nlohmann::json log = nlohmann::json::array();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(videos.begin(), videos.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<const CompositionTriplet*> batch;
    auto flush = [&] {
      if (batch.size() >= 2) {
        const Var loss = model.batch_loss(batch);
        if (!std::isfinite(loss.scalar())) {
          throw NumericError("composition loss is " + std::to_string(loss.scalar()) +
                             " at epoch " + std::to_string(epoch));
        }
        nn::backward(loss);
        adam.step();
        loss_sum += loss.scalar();
        ++batches;
      }
      batch.clear();
    };
    for (const auto* list : videos) {
      batch.insert(batch.end(), list->begin(), list->end());
      if (batch.size() >= static_cast<std::size_t>(cfg.batch_size)) flush();
    }
    flush();
    log.push_back({{"epoch", epoch},
                   {"loss", loss_sum / static_cast<double>(std::max<std::size_t>(1, batches))},
                   {"scale", model.scale()}});
  }
  return log;
}

std::vector<std::vector<RankedQuery>> rank_queries(
    const CompositionScorer& scorer, const std::vector<std::vector<RetrievalQuery>>& per_video) {
  std::vector<std::vector<RankedQuery>> out;
  for (const auto& video : per_video) {
    std::vector<RankedQuery> ranked;
    for (const auto& q : video) {
      const auto s = scorer.scores(q.triplet.video_id, q.triplet.source, q.triplet.captions,
                                   q.candidates);
      std::vector<std::size_t> idx(s.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] > s[b]; });
      RankedQuery r;
      r.target = q.triplet.target;
      for (auto i : idx) r.ranked.push_back(q.candidates[i]);
      ranked.push_back(std::move(r));
    }
    out.push_back(std::move(ranked));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int> greedy_sort(const std::string& video_id, std::span<const std::string> images,
                             std::span<const std::string> captions,
                             const PairwiseScorer& pairwise,
                             const CompositionScorer& composition,
                             const GreedySortOptions& options, std::vector<int>* chosen_ends) {
  const int n = static_cast<int>(images.size());
  const int m = static_cast<int>(captions.size());
  if (n == 0) throw ValidationError("greedy_sort needs at least one image");
  if (n == 1) return {0};
  int y = options.first_image_consumes_caption ? 1 : 0;  // next unconsumed caption
  if (m - y < n - 1) {
    throw ValidationError("greedy_sort: " + std::to_string(m) + " captions cannot cover " +
                          std::to_string(n) + " images");
  }

  // First image: highest mean probability of preceding every other image.
  int first = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j != i) {
        s += pairwise.probability(video_id, images[static_cast<std::size_t>(i)],
                                  images[static_cast<std::size_t>(j)]);
      }
    }
    s /= static_cast<double>(n - 1);
    if (s > best) {
      best = s;
      first = i;
    }
  }

  std::vector<int> order{first};
  std::vector<bool> placed(static_cast<std::size_t>(n), false);
  placed[static_cast<std::size_t>(first)] = true;
  while (static_cast<int>(order.size()) < n) {
    const int x = static_cast<int>(order.size());
    // Latest caption (0-based) this image may consume while leaving one for
    // each image still to come.
    const int last = options.literal_bound ? m - (n - x) - 2 : m - (n - x);
    if (last < y) {
      throw ValidationError("greedy_sort: no caption range for image " + std::to_string(x + 1) +
                            " (captions " + std::to_string(y + 1) + ".." +
                            std::to_string(last + 1) + ")");
    }
    std::vector<std::string> remaining;
    std::vector<int> remaining_idx;
    for (int i = 0; i < n; ++i) {
      if (!placed[static_cast<std::size_t>(i)]) {
        remaining.push_back(images[static_cast<std::size_t>(i)]);
        remaining_idx.push_back(i);
      }
    }
    const auto& anchor = images[static_cast<std::size_t>(order.back())];
    double top = -std::numeric_limits<double>::infinity();
    int pick = -1, pick_end = -1;
    for (int j = y; j <= last; ++j) {
      const auto s = composition.scores(
          video_id, anchor, captions.subspan(static_cast<std::size_t>(y),
                                             static_cast<std::size_t>(j - y + 1)),
          remaining);
      for (std::size_t r = 0; r < s.size(); ++r) {
        if (s[r] > top) {
          top = s[r];
          pick = remaining_idx[r];
          pick_end = j;
        }
      }
    }
    if (pick < 0) throw NumericError("greedy_sort: composition scores are not comparable");
    order.push_back(pick);
    placed[static_cast<std::size_t>(pick)] = true;
    if (chosen_ends != nullptr) chosen_ends->push_back(pick_end);
    y = pick_end + 1;
  }
  return order;
}

int select_answer_by_edit_distance(const Permutation5& predicted, const OrderingQuestion& q) {
  int best = 0;
  int best_d = std::numeric_limits<int>::max();
  for (int c = 0; c < kCandidatesPerQuestion; ++c) {
    const int d = levenshtein(predicted, q.candidates[static_cast<std::size_t>(c)]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

int select_answer_greedy(const PairwiseScorer& pairwise, const CompositionScorer& composition,
                         const OrderingQuestion& q, const GreedySortOptions& options) {
  if (q.captions.empty()) {
    throw ValidationError("question " + q.question_id + " carries no captions for greedy sorting");
  }
  const auto order = greedy_sort(q.video_id, q.items, q.captions, pairwise, composition, options);
  std::array<int, 5> perm{};
  std::copy(order.begin(), order.end(), perm.begin());
  return select_answer_by_edit_distance(Permutation5(perm), q);
}

}  // namespace ordervqa
