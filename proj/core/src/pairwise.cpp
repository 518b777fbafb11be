// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/pairwise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ordervqa/config.hpp"
#include "ordervqa/metrics.hpp"
#include "ordervqa/random.hpp"

namespace ordervqa {

using nn::Matrix;
using nn::Var;

std::array<std::array<double, 5>, 5> PairwiseScorer::matrix(
    const std::string& video_id, const std::array<std::string, 5>& items) const {
  std::array<std::array<double, 5>, 5> p{};
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      if (i != j) p[i][j] = probability(video_id, items[i], items[j]);
    }
  }
  return p;
}

double candidate_score(const std::array<std::array<double, 5>, 5>& p,
                       const Permutation5& perm) {
  double total = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      total += p[static_cast<std::size_t>(perm[i])][static_cast<std::size_t>(perm[j])];
    }
  }
  return total / 10.0;
}

double candidate_score(const PairwiseScorer& scorer, const Permutation5& perm,
                       const std::string& video_id, const std::array<std::string, 5>& items) {
  return candidate_score(scorer.matrix(video_id, items), perm);
}

int argmax_lowest(std::span<const double> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int select_answer_pairwise(const PairwiseScorer& scorer, const OrderingQuestion& q) {
  const auto p = scorer.matrix(q.video_id, q.items);
  std::array<double, 4> scores{};
  for (std::size_t c = 0; c < 4; ++c) scores[c] = candidate_score(p, q.candidates[c]);
  return argmax_lowest(scores);
}

std::vector<PairSample> build_pair_dataset(const std::vector<VideoAnnotation>& videos,
                                           const PairDatasetOptions& options) {
  std::vector<PairSample> out;
  for (const auto& video : videos) {
    const auto k = video.steps.size();
    if (k < 2) continue;
    Rng rng(derive_seed(options.seed, "pairs/" + video.video_id));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
    }
    if (options.max_pairs_per_video > 0 &&
        pairs.size() > static_cast<std::size_t>(options.max_pairs_per_video)) {
      std::shuffle(pairs.begin(), pairs.end(), rng);
      pairs.resize(static_cast<std::size_t>(options.max_pairs_per_video));
      std::sort(pairs.begin(), pairs.end());
    }
    auto item = [&](std::size_t s) {
      const auto& step = video.steps[s];
      return options.kind == ItemKind::kImage
                 ? step_end_image_id(video, step.index, options.fps)
                 : step.caption;
    };
    for (const auto& [i, j] : pairs) {
      const int gap = video.steps[j].index - video.steps[i].index;
      out.push_back({video.video_id, item(i), item(j), 1, gap});
      out.push_back({video.video_id, item(j), item(i), 0, gap});
    }
  }
  Rng rng(derive_seed(options.seed, "pairs/shuffle"));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<std::vector<std::size_t>> curriculum_schedule(std::span<const PairSample> data,
                                                          int n_phases) {
  if (n_phases < 1) throw ValidationError("curriculum needs at least one phase");
  std::vector<int> gaps;
  gaps.reserve(data.size());
  for (const auto& s : data) gaps.push_back(s.step_gap);
  std::sort(gaps.begin(), gaps.end(), std::greater<>());
  const auto n = gaps.size();
  std::vector<std::vector<std::size_t>> pools;
  for (int k = 1; k <= n_phases; ++k) {
    std::vector<std::size_t> pool;
    if (n > 0) {
      const auto pos = (static_cast<std::size_t>(k) * n + static_cast<std::size_t>(n_phases) - 1) /
                           static_cast<std::size_t>(n_phases) -
                       1;
      const int threshold = k == n_phases ? std::numeric_limits<int>::min() : gaps[pos];
      for (std::size_t i = 0; i < n; ++i) {
        if (data[i].step_gap >= threshold) pool.push_back(i);
      }
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

std::map<std::string, double> stepgap_accuracy(std::span<const PairOutcome> results) {
  std::map<std::string, std::pair<int, int>> tally;
  for (const auto& r : results) {
    auto& [hit, total] = tally[gap_bucket(r.step_gap)];
    hit += r.correct ? 1 : 0;
    ++total;
  }
  std::map<std::string, double> out;
  for (const auto& [bucket, t] : tally) {
    out[bucket] = static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return out;
}

// ---------------------------------------------------------------------------

PairwiseComparator::PairwiseComparator(const PairwiseConfig& config,
                                       const FeatureStore* features)
    : config_(config), features_(features) {
  if (config.kind != ItemKind::kImage) throw ValidationError("image comparator needs kind=image");
  if (features == nullptr || features->dimension() == 0) {
    throw ValidationError("image comparator needs a non-empty feature store");
  }
  Rng rng(derive_seed(config.seed, "pairwise/init"));
  build(rng, features->dimension());
}

PairwiseComparator::PairwiseComparator(const PairwiseConfig& config, Vocabulary vocab)
    : config_(config), vocab_(std::move(vocab)) {
  if (config.kind != ItemKind::kCaption) {
    throw ValidationError("caption comparator needs kind=caption");
  }
  Rng rng(derive_seed(config.seed, "pairwise/init"));
  embedding_ = nn::Embedding(rng, static_cast<Eigen::Index>(vocab_.size()), config.embed_dim);
  gru_ = nn::BiGru(rng, config.embed_dim, config.text_hidden);
  embedding_.register_in(params_, "embedding");
  gru_.register_in(params_, "gru");
  build(rng, gru_.output_dim());
}

void PairwiseComparator::build(Rng& rng, Eigen::Index input_dim) {
  if (config_.hidden.empty()) throw ValidationError("pairwise classifier needs hidden layers");
  Eigen::Index width = 2 * input_dim;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    if (config_.hidden[i] < 1) throw ValidationError("hidden widths must be positive");
    mlp_.emplace_back(rng, width, config_.hidden[i]);
    width = config_.hidden[i];
  }
  // A zero output layer makes the untrained comparator answer exactly 0.5.
  mlp_.push_back(nn::Linear::zeros(width, 1));
  for (std::size_t i = 0; i < mlp_.size(); ++i) {
    mlp_[i].register_in(params_, "mlp." + std::to_string(i));
  }
}

Var PairwiseComparator::encode(std::span<const std::string> items) const {
  if (config_.kind == ItemKind::kImage) {
    if (features_ == nullptr) throw Error("image comparator has no feature store attached");
    Matrix m(static_cast<Eigen::Index>(items.size()), features_->dimension());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto values = features_->at(items[i]).values();
      for (std::size_t c = 0; c < values.size(); ++c) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = values[c];
      }
    }
    return nn::constant(std::move(m));
  }
  std::vector<Var> rows;
  rows.reserve(items.size());
  for (const auto& caption : items) {
    const auto ids = vocab_.encode(caption, config_.max_tokens);
    rows.push_back(gru_.mean_state(embedding_(ids)));
  }
  return nn::concat_rows(rows);
}

Var PairwiseComparator::logits(const Var& ea, const Var& eb) const {
  const Var parts[] = {ea, eb};
  Var h = nn::concat_cols(parts);
  for (std::size_t i = 0; i + 1 < mlp_.size(); ++i) h = nn::relu(mlp_[i](h));
  return mlp_.back()(h);
}

namespace {

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double PairwiseComparator::probability(const std::string&, const std::string& a,
                                       const std::string& b) const {
  const std::string items[] = {a, b};
  const Var e = encode(items);
  return logistic(logits(nn::slice_rows(e, 0, 1), nn::slice_rows(e, 1, 1)).scalar());
}

std::array<std::array<double, 5>, 5> PairwiseComparator::matrix(
    const std::string&, const std::array<std::string, 5>& items) const {
  const Var e = encode(items);
  std::vector<int> ia, ib;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i != j) {
        ia.push_back(i);
        ib.push_back(j);
      }
    }
  }
  const Var z = logits(nn::gather_rows(e, ia), nn::gather_rows(e, ib));
  std::array<std::array<double, 5>, 5> p{};
  for (std::size_t r = 0; r < ia.size(); ++r) {
    p[static_cast<std::size_t>(ia[r])][static_cast<std::size_t>(ib[r])] =
        logistic(z.value()(static_cast<Eigen::Index>(r), 0));
  }
  return p;
}

Checkpoint PairwiseComparator::to_checkpoint(const nlohmann::json& log) const {
  Checkpoint ckpt;
  ckpt.model = config_.kind == ItemKind::kImage ? "pairwise_image" : "pairwise_text";
  ckpt.config = to_json(config_);
  if (config_.kind == ItemKind::kImage) ckpt.config["input_dim"] = features_->dimension();
  ckpt.log = log;
  ckpt.vocabulary = vocab_.tokens();
  ckpt.store(params_);
  return ckpt;
}

PairwiseComparator PairwiseComparator::from_checkpoint(const Checkpoint& ckpt,
                                                       const FeatureStore* features) {
  if (ckpt.model != "pairwise_image" && ckpt.model != "pairwise_text") {
    throw ValidationError("checkpoint holds a '" + ckpt.model + "' model, not a pairwise one");
  }
  nlohmann::json cfg = ckpt.config;
  const auto input_dim = cfg.value("input_dim", 0u);
  cfg.erase("input_dim");
  const PairwiseConfig config = pairwise_config_from_json(cfg);
  if (config.kind == ItemKind::kImage) {
    if (features == nullptr) throw ValidationError("image comparator needs --features");
    if (features->dimension() != input_dim) {
      throw ValidationError("feature dimension " + std::to_string(features->dimension()) +
                            " does not match checkpoint dimension " +
                            std::to_string(input_dim));
    }
    PairwiseComparator model(config, features);
    ckpt.load_into(model.params_);
    return model;
  }
  PairwiseComparator model(config, Vocabulary(ckpt.vocabulary));
  ckpt.load_into(model.params_);
  return model;
}

double pair_accuracy(const PairwiseScorer& scorer, std::span<const PairSample> data,
                     std::vector<PairOutcome>* outcomes) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : data) {
    const bool says_earlier = scorer.probability(s.video_id, s.item_a, s.item_b) > 0.5;
    const bool correct = says_earlier == (s.label == 1);
    hit += correct ? 1 : 0;
    if (outcomes != nullptr) outcomes->push_back({s.step_gap, correct});
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

nlohmann::json train_pairwise(PairwiseComparator& model, std::span<const PairSample> train,
                              std::span<const PairSample> validation) {
  const auto& cfg = model.config();
  if (train.empty()) throw ValidationError("pairwise training set is empty");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ValidationError("bad pairwise schedule");
  const auto pools = curriculum_schedule(train, cfg.curriculum_phases);
  const int warmup = (cfg.curriculum_phases - 1) * cfg.epochs_per_phase;
  if (cfg.curriculum_phases > 1 && cfg.epochs <= warmup) {
    throw ValidationError("curriculum needs more than " + std::to_string(warmup) +
                          " epochs to reach the full pool");
  }

  nn::Adam adam(model.parameters().vars(), {.learning_rate = cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "pairwise/train"));
  nlohmann::json log = nlohmann::json::array();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::size_t phase =
        cfg.epochs_per_phase > 0
            ? std::min<std::size_t>(static_cast<std::size_t>(epoch / std::max(1, cfg.epochs_per_phase)),
                                    pools.size() - 1)
            : pools.size() - 1;
    std::vector<std::size_t> order = epoch < warmup ? pools[phase] : pools.back();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::string> unique;
      std::map<std::string, int> slot;
      std::vector<int> ia, ib;
      Matrix labels(static_cast<Eigen::Index>(end - at), 1);
      for (std::size_t i = at; i < end; ++i) {
        const auto& s = train[order[i]];
        for (const auto* item : {&s.item_a, &s.item_b}) {
          if (slot.emplace(*item, static_cast<int>(unique.size())).second) unique.push_back(*item);
        }
        ia.push_back(slot[s.item_a]);
        ib.push_back(slot[s.item_b]);
        labels(static_cast<Eigen::Index>(i - at), 0) = s.label;
      }
      const Var e = model.encode(unique);
      const Var loss =
          nn::bce_with_logits(model.logits(nn::gather_rows(e, ia), nn::gather_rows(e, ib)), labels);
      if (!std::isfinite(loss.scalar())) {
        throw NumericError("pairwise loss is " + std::to_string(loss.scalar()) + " at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      nn::backward(loss);
      adam.step();
      loss_sum += loss.scalar();
      ++batches;
    }
    nlohmann::json entry = {{"epoch", epoch},
                            {"pool", order.size()},
                            {"loss", loss_sum / static_cast<double>(std::max<std::size_t>(1, batches))}};
    if (!validation.empty()) entry["val_accuracy"] = pair_accuracy(model, validation);
    log.push_back(std::move(entry));
  }
  return log;
}

}  // namespace ordervqa
