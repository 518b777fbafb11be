// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/config.hpp"

#include <set>

#include "ordervqa/io.hpp"

namespace ordervqa {

using nlohmann::json;

std::string_view to_string(ItemKind kind) {
  return kind == ItemKind::kImage ? "image" : "caption";
}

ItemKind parse_item_kind(std::string_view name) {
  if (name == "image") return ItemKind::kImage;
  if (name == "caption") return ItemKind::kCaption;
  throw ValidationError("unknown item kind '" + std::string(name) + "' (image|caption)");
}

namespace {

/// Copies known fields out of one config section and remembers them, so
/// finish() can reject whatever is left.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) throw ValidationError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void operator()(const char* key, T& out) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config field '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void kind(const char* key, ItemKind& out) {
    std::string name(to_string(out));
    (*this)(key, name);
    out = parse_item_kind(name);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!known_.contains(key)) {
        throw ValidationError("unknown config field '" + name_ + "." + key + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

template <typename Fn>
json dump_fields(Fn&& fn) {
  json out = json::object();
  auto put = [&](const char* key, const auto& value) { out[key] = value; };
  fn(put);
  return out;
}

#define WORLD_FIELDS(F)                                                              \
  F("n_videos", c.n_videos);                                                        \
  F("min_steps", c.min_steps);                                                      \
  F("max_steps", c.max_steps);                                                      \
  F("feature_dim", c.feature_dim);                                                  \
  F("effect_magnitude", c.effect_magnitude);                                        \
  F("noise", c.noise);                                                              \
  F("token_scale", c.token_scale);                                                  \
  F("base_scale", c.base_scale);                                                    \
  F("n_cosmetics", c.n_cosmetics);                                                  \
  F("n_tools", c.n_tools);                                                          \
  F("caption_order_bias", c.caption_order_bias);                                    \
  F("min_duration_s", c.min_duration_s);                                            \
  F("max_duration_s", c.max_duration_s);                                            \
  F("fps", c.fps);                                                                  \
  F("segments_per_video", c.segments_per_video);                                    \
  F("segment_dim", c.segment_dim);                                                  \
  F("segment_signal", c.segment_signal);                                            \
  F("segment_noise", c.segment_noise);                                              \
  F("id_prefix", c.id_prefix);                                                      \
  F("seed", c.seed);

#define QUESTION_FIELDS(F)                                                           \
  F("n_questions", c.n_questions);                                                  \
  F("seed", c.seed);                                                                \
  F("per_video_cap", c.per_video_cap);                                              \
  F("fps", c.fps);                                                                  \
  F("include_captions", c.include_captions);

#define PAIRWISE_FIELDS(F)                                                           \
  F("hidden", c.hidden);                                                            \
  F("embed_dim", c.embed_dim);                                                      \
  F("text_hidden", c.text_hidden);                                                  \
  F("max_tokens", c.max_tokens);                                                    \
  F("epochs", c.epochs);                                                            \
  F("batch_size", c.batch_size);                                                    \
  F("learning_rate", c.learning_rate);                                              \
  F("curriculum_phases", c.curriculum_phases);                                      \
  F("epochs_per_phase", c.epochs_per_phase);                                        \
  F("seed", c.seed);

#define COMPOSITION_FIELDS(F)                                                        \
  F("embed_dim", c.embed_dim);                                                      \
  F("text_hidden", c.text_hidden);                                                  \
  F("joint_dim", c.joint_dim);                                                      \
  F("max_tokens", c.max_tokens);                                                    \
  F("epochs", c.epochs);                                                            \
  F("batch_size", c.batch_size);                                                    \
  F("learning_rate", c.learning_rate);                                              \
  F("init_scale", c.init_scale);                                                    \
  F("splits_per_video", c.splits_per_video);                                        \
  F("n_parts", c.n_parts);                                                          \
  F("seed", c.seed);

#define GROUNDING_FIELDS(F)                                                          \
  F("max_video_segments", c.max_video_segments);                                    \
  F("max_sentence_tokens", c.max_sentence_tokens);                                  \
  F("pyramid", c.pyramid);                                                          \
  F("anchor_ratios", c.anchor_ratios);                                              \
  F("lambda_over", c.lambda_over);                                                  \
  F("lambda_loc", c.lambda_loc);                                                    \
  F("lambda_face", c.lambda_face);                                                  \
  F("learning_rate", c.learning_rate);                                              \
  F("embed_dim", c.embed_dim);                                                      \
  F("text_hidden", c.text_hidden);                                                  \
  F("hidden_dim", c.hidden_dim);                                                    \
  F("attention_dim", c.attention_dim);                                              \
  F("epochs", c.epochs);                                                            \
  F("batch_size", c.batch_size);                                                    \
  F("max_grad_norm", c.max_grad_norm);                                              \
  F("face_head", c.face_head);                                                      \
  F("seed", c.seed);

}  // namespace

json to_json(const WorldConfig& c) {
  return dump_fields([&](auto&& put) { WORLD_FIELDS(put) });
}

json to_json(const QuestionGenOptions& c) {
  json out = dump_fields([&](auto&& put) { QUESTION_FIELDS(put) });
  out["excluded_video_ids"] = c.excluded_video_ids;
  return out;
}

json to_json(const PairwiseConfig& c) {
  json out = dump_fields([&](auto&& put) { PAIRWISE_FIELDS(put) });
  out["kind"] = to_string(c.kind);
  return out;
}

json to_json(const CompositionConfig& c) {
  return dump_fields([&](auto&& put) { COMPOSITION_FIELDS(put) });
}

json to_json(const GroundingConfig& c) {
  return dump_fields([&](auto&& put) { GROUNDING_FIELDS(put) });
}

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"world", to_json(c.world)},
          {"questions", to_json(c.questions)},
          {"pairwise", to_json(c.pairwise)},
          {"composition", to_json(c.composition)},
          {"grounding", to_json(c.grounding)}};
}

WorldConfig world_config_from_json(const json& j, WorldConfig c) {
  Section get(j, "world");
  WORLD_FIELDS(get)
  get.finish();
  return c;
}

QuestionGenOptions question_options_from_json(const json& j, QuestionGenOptions c) {
  Section get(j, "questions");
  QUESTION_FIELDS(get)
  get("excluded_video_ids", c.excluded_video_ids);
  get.finish();
  return c;
}

PairwiseConfig pairwise_config_from_json(const json& j, PairwiseConfig c) {
  Section get(j, "pairwise");
  PAIRWISE_FIELDS(get)
  get.kind("kind", c.kind);
  get.finish();
  return c;
}

CompositionConfig composition_config_from_json(const json& j, CompositionConfig c) {
  Section get(j, "composition");
  COMPOSITION_FIELDS(get)
  get.finish();
  return c;
}

GroundingConfig grounding_config_from_json(const json& j, GroundingConfig c) {
  Section get(j, "grounding");
  GROUNDING_FIELDS(get)
  get.finish();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig run;
  Section top(j, "config");
  top("seed", run.seed);
  json sections[5];
  const char* names[] = {"world", "questions", "pairwise", "composition", "grounding"};
  for (int i = 0; i < 5; ++i) {
    top(names[i], sections[i]);
    if (sections[i].is_null()) sections[i] = json::object();
    if (!sections[i].contains("seed")) sections[i]["seed"] = run.seed;
  }
  top.finish();
  run.world = world_config_from_json(sections[0]);
  run.questions = question_options_from_json(sections[1]);
  run.pairwise = pairwise_config_from_json(sections[2]);
  run.composition = composition_config_from_json(sections[3]);
  run.grounding = grounding_config_from_json(sections[4]);
  return run;
}

RunConfig parse_run_config(std::string_view text) {
  return run_config_from_json(parse_json_document(text));
}

RunConfig read_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path));
}

}  // namespace ordervqa
