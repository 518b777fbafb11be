// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ordervqa {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Frame sampling

FrameSamplePlan plan_frames(const TemporalSpan& span, double fps) {
  if (!std::isfinite(fps) || fps <= 0.0) {
    throw ValidationError("fps must be finite and positive");
  }
  if (!span.valid()) {
    throw ValidationError("cannot plan frames for an invalid span");
  }
  const auto last = static_cast<long long>(std::floor(span.end_s * fps));
  const auto first = static_cast<long long>(std::floor(span.start_s * fps));
  const long long gap = span.width() < kLongClipSeconds ? 1 : kLongClipFrameGap;

  FrameSamplePlan plan;
  plan.frame_indices.reserve(kFramesPerClip);
  for (int k = 0; k < kFramesPerClip; ++k) {
    long long frame = last - gap * k;
    if (frame < first) {
      frame = first;
      if (k > 0) plan.duplicate_warning = true;
    }
    plan.frame_indices.push_back(frame);
  }
  return plan;
}

std::vector<FrameSamplePlan> plan_frames(const std::vector<VideoAnnotation>& videos,
                                         double fps) {
  std::vector<FrameSamplePlan> plans;
  for (const auto& video : videos) {
    for (const auto& step : video.steps) {
      auto plan = plan_frames(step.span, fps);
      plan.video_id = video.video_id;
      plan.step_index = step.index;
      plans.push_back(std::move(plan));
    }
  }
  return plans;
}

std::string step_end_image_id(const VideoAnnotation& video, int step_index,
                              double fps) {
  const auto* step = video.step(step_index);
  if (step == nullptr) {
    throw ValidationError("video " + video.video_id + " has no step " +
                          std::to_string(step_index));
  }
  return image_id(video.video_id, step_index, plan_frames(step->span, fps).last_frame());
}

// ---------------------------------------------------------------------------
// JSON plumbing

json parse_json_document(std::string_view text) {
  std::vector<std::set<std::string>> keys;
  std::string duplicate;
  auto callback = [&](int, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        keys.emplace_back();
        break;
      case json::parse_event_t::object_end:
        if (!keys.empty()) keys.pop_back();
        break;
      case json::parse_event_t::key:
        if (!keys.empty() && !keys.back().insert(parsed.get<std::string>()).second &&
            duplicate.empty()) {
          duplicate = parsed.get<std::string>();
        }
        break;
      default:
        break;
    }
    return true;
  };
  json doc;
  try {
    doc = json::parse(text.begin(), text.end(), callback);
  } catch (const json::parse_error& e) {
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError("malformed JSON at byte " + std::to_string(offset) + ": " +
                         e.what(),
                     offset);
  }
  if (!duplicate.empty()) throw ParseError("duplicate key '" + duplicate + "'");
  return doc;
}

namespace {

json parse_document(std::string_view text) { return parse_json_document(text); }

const json& require(const json& obj, const char* field, const std::string& ctx) {
  if (!obj.is_object()) throw ParseError(ctx + ": expected an object");
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw ParseError(ctx + ": missing field '" + field + "'");
  }
  return *it;
}

double require_number(const json& obj, const char* field, const std::string& ctx) {
  const auto& v = require(obj, field, ctx);
  if (!v.is_number()) {
    throw ParseError(ctx + ": field '" + field + "' must be a number");
  }
  return v.get<double>();
}

long long require_integer(const json& obj, const char* field,
                          const std::string& ctx) {
  const auto& v = require(obj, field, ctx);
  if (!v.is_number_integer()) {
    throw ParseError(ctx + ": field '" + field + "' must be an integer");
  }
  return v.get<long long>();
}

std::string require_string(const json& obj, const char* field,
                           const std::string& ctx) {
  const auto& v = require(obj, field, ctx);
  if (!v.is_string()) {
    throw ParseError(ctx + ": field '" + field + "' must be a string");
  }
  return v.get<std::string>();
}

const json& require_array(const json& obj, const char* field,
                          const std::string& ctx) {
  const auto& v = require(obj, field, ctx);
  if (!v.is_array()) {
    throw ParseError(ctx + ": field '" + field + "' must be an array");
  }
  return v;
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Annotations

AnnotationSet parse_annotations(std::string_view text, ReadOptions options) {
  const json doc = parse_document(text);
  const auto& videos = require_array(doc, "videos", "annotations");
  AnnotationSet out;
  std::set<std::string> ids;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const std::string ctx = "videos[" + std::to_string(v) + "]";
    VideoAnnotation video;
    video.video_id = require_string(videos[v], "video_id", ctx);
    video.duration_s = require_number(videos[v], "duration_s", ctx);
    if (!ids.insert(video.video_id).second) {
      throw ParseError(ctx + ": duplicate video_id '" + video.video_id + "'");
    }
    const auto& steps = require_array(videos[v], "steps", ctx);
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const std::string sctx = ctx + ".steps[" + std::to_string(s) + "]";
      StepAnnotation step;
      step.index = static_cast<int>(require_integer(steps[s], "index", sctx));
      step.caption = require_string(steps[s], "caption", sctx);
      step.span.start_s = require_number(steps[s], "start_s", sctx);
      step.span.end_s = require_number(steps[s], "end_s", sctx);
      const auto& areas = require_array(steps[s], "areas", sctx);
      for (const auto& area : areas) {
        if (!area.is_number_integer()) {
          throw ParseError(sctx + ": field 'areas' must hold integers");
        }
        step.areas.push_back(FacialArea{area.get<int>()});
      }
      video.steps.push_back(std::move(step));
    }
    for (const auto& violation : validate_annotation(video)) {
      const std::string msg = video.video_id + ": " + violation.to_string();
      if (options.strict) throw ValidationError(msg);
      out.violations.push_back(msg);
    }
    for (const auto& warning : annotation_warnings(video)) {
      out.warnings.push_back(video.video_id + ": " + warning.to_string());
    }
    out.videos.push_back(std::move(video));
  }
  return out;
}

AnnotationSet read_annotations(const std::filesystem::path& path,
                               ReadOptions options) {
  try {
    return parse_annotations(read_file(path), options);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string format_annotations(const std::vector<VideoAnnotation>& videos) {
  json arr = json::array();
  for (const auto& video : videos) {
    json steps = json::array();
    for (const auto& step : video.steps) {
      json areas = json::array();
      for (const auto& area : step.areas) areas.push_back(area.region_id);
      steps.push_back({{"index", step.index},
                       {"caption", step.caption},
                       {"start_s", step.span.start_s},
                       {"end_s", step.span.end_s},
                       {"areas", std::move(areas)}});
    }
    arr.push_back({{"video_id", video.video_id},
                   {"duration_s", video.duration_s},
                   {"steps", std::move(steps)}});
  }
  return dump(json{{"videos", std::move(arr)}});
}

void write_annotations(const std::filesystem::path& path,
                       const std::vector<VideoAnnotation>& videos) {
  write_file(path, format_annotations(videos));
}

// ---------------------------------------------------------------------------
// Questions

QuestionSet parse_questions(std::string_view text) {
  const json doc = parse_document(text);
  QuestionSet set;
  set.task = parse_task(require_string(doc, "task", "questions file"));
  const auto& questions = require_array(doc, "questions", "questions file");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const std::string ctx = "questions[" + std::to_string(i) + "]";
    const auto& jq = questions[i];
    OrderingQuestion q;
    q.task = set.task;
    q.question_id = require_string(jq, "qid", ctx);
    if (!ids.insert(q.question_id).second) {
      throw ParseError(ctx + ": duplicate question id '" + q.question_id + "'");
    }
    q.video_id = require_string(jq, "video_id", ctx);
    const auto& items = require_array(jq, "items", ctx);
    if (items.size() != 5) throw ParseError(ctx + ": 'items' must hold 5 entries");
    for (std::size_t k = 0; k < 5; ++k) {
      if (!items[k].is_string()) throw ParseError(ctx + ": items must be strings");
      q.items[k] = items[k].get<std::string>();
    }
    const auto& cands = require_array(jq, "candidates", ctx);
    if (cands.size() != 4) {
      throw ParseError(ctx + ": 'candidates' must hold 4 permutations");
    }
    for (std::size_t c = 0; c < 4; ++c) {
      if (!cands[c].is_array() || cands[c].size() != 5) {
        throw ParseError(ctx + ": candidate " + std::to_string(c) +
                         " must be an array of 5 integers");
      }
      std::array<int, 5> order{};
      for (std::size_t k = 0; k < 5; ++k) {
        if (!cands[c][k].is_number_integer()) {
          throw ParseError(ctx + ": candidate entries must be integers");
        }
        order[k] = cands[c][k].get<int>();
      }
      if (!Permutation5::is_valid(order)) {
        throw ParseError(ctx + ": candidate " + std::to_string(c) +
                         " is not a permutation of 0..4");
      }
      q.candidates[c] = Permutation5(order);
    }
    if (auto it = jq.find("answer"); it != jq.end()) {
      if (!it->is_number_integer()) throw ParseError(ctx + ": 'answer' must be an integer");
      q.answer_index = it->get<int>();
    }
    if (auto it = jq.find("captions"); it != jq.end()) {
      if (!it->is_array()) throw ParseError(ctx + ": 'captions' must be an array");
      for (const auto& c : *it) {
        if (!c.is_string()) throw ParseError(ctx + ": captions must be strings");
        q.captions.push_back(c.get<std::string>());
      }
    }
    for (const auto& violation : validate_question(q)) {
      throw ParseError(ctx + ": " + violation.to_string());
    }
    set.questions.push_back(std::move(q));
  }
  return set;
}

QuestionSet read_questions(const std::filesystem::path& path) {
  try {
    return parse_questions(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string format_questions(const QuestionSet& set) {
  json arr = json::array();
  for (const auto& q : set.questions) {
    json jq = {{"qid", q.question_id}, {"video_id", q.video_id}};
    jq["items"] = json(std::vector<std::string>(q.items.begin(), q.items.end()));
    json cands = json::array();
    for (const auto& c : q.candidates) {
      cands.push_back(std::vector<int>(c.order().begin(), c.order().end()));
    }
    jq["candidates"] = std::move(cands);
    if (q.answer_index) jq["answer"] = *q.answer_index;
    if (!q.captions.empty()) jq["captions"] = q.captions;
    arr.push_back(std::move(jq));
  }
  return dump(json{{"task", std::string(to_string(set.task))},
                   {"questions", std::move(arr)}});
}

void write_questions(const std::filesystem::path& path, const QuestionSet& set) {
  write_file(path, format_questions(set));
}

QuestionSet strip_answers(const QuestionSet& set) {
  QuestionSet out = set;
  for (auto& q : out.questions) q.answer_index.reset();
  return out;
}

// ---------------------------------------------------------------------------
// Predictions

Predictions parse_predictions(std::string_view text) {
  const json doc = parse_document(text);
  if (!doc.is_object()) throw ParseError("predictions: expected an object");
  Predictions out;
  for (const auto& [qid, choice] : doc.items()) {
    if (!choice.is_number_integer()) {
      throw ParseError("predictions: choice for '" + qid + "' must be an integer");
    }
    const long long c = choice.get<long long>();
    if (c < 0 || c > 3) {
      throw ValidationError("predictions: choice " + std::to_string(c) +
                            " for '" + qid + "' is out of range [0,3]");
    }
    out.emplace(qid, static_cast<int>(c));
  }
  return out;
}

Predictions read_predictions(const std::filesystem::path& path) {
  try {
    return parse_predictions(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string format_predictions(const Predictions& predictions) {
  json doc = json::object();
  for (const auto& [qid, choice] : predictions) doc[qid] = choice;
  return dump(doc);
}

std::string format_frame_plans(const std::vector<FrameSamplePlan>& plans, double fps) {
  json arr = json::array();
  for (const auto& p : plans) {
    arr.push_back({{"video_id", p.video_id},
                   {"step_index", p.step_index},
                   {"frame_indices", p.frame_indices},
                   {"duplicate_warning", p.duplicate_warning}});
  }
  return dump(json{{"fps", fps}, {"plans", std::move(arr)}});
}

void write_predictions(const std::filesystem::path& path,
                       const Predictions& predictions) {
  write_file(path, format_predictions(predictions));
}

Predictions answer_key(const QuestionSet& set) {
  Predictions key;
  for (const auto& q : set.questions) {
    if (!q.answer_index) {
      throw ValidationError("question '" + q.question_id + "' has no answer");
    }
    key.emplace(q.question_id, *q.answer_index);
  }
  return key;
}

void check_predictions_known(const Predictions& predictions,
                             const QuestionSet& set) {
  std::set<std::string_view> ids;
  for (const auto& q : set.questions) ids.insert(q.question_id);
  for (const auto& [qid, choice] : predictions) {
    if (!ids.contains(qid)) {
      throw ValidationError("prediction for unknown question id '" + qid + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Feature store

FeatureStore::FeatureStore(std::uint32_t dimension) : dimension_(dimension) {}

bool FeatureStore::contains(std::string_view id) const {
  return entries_.find(id) != entries_.end();
}

void FeatureStore::insert(std::string id, FeatureVector vector) {
  if (vector.size() != dimension_) {
    throw ValidationError("feature '" + id + "' has length " +
                          std::to_string(vector.size()) + ", store dimension is " +
                          std::to_string(dimension_));
  }
  if (id.empty() || id.size() > 0xFFFF) {
    throw ValidationError("feature id must be 1..65535 bytes");
  }
  entries_.insert_or_assign(std::move(id), std::move(vector));
}

const FeatureVector& FeatureStore::at(std::string_view id) const {
  const auto* v = find(id);
  if (v == nullptr) throw Error("unknown feature id '" + std::string(id) + "'");
  return *v;
}

const FeatureVector* FeatureStore::find(std::string_view id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

namespace {

constexpr char kFeatureMagic[4] = {'O', 'V', 'Q', 'F'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("feature store truncated while reading ") +
                           what + " at byte " + std::to_string(bytes_.size()),
                       bytes_.size());
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

FeatureStore parse_features(std::string_view bytes) {
  ByteReader in(bytes);
  auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), kFeatureMagic, 4) != 0) {
    throw ParseError("feature store: bad magic (expected OVQF) at byte 0", 0);
  }
  const auto dimension = in.get_le<std::uint32_t>("dimension");
  const auto count = in.get_le<std::uint32_t>("count");
  FeatureStore store(dimension);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::size_t record_start = in.pos();
    const auto id_len = in.get_le<std::uint16_t>("id length");
    std::string id(in.take(id_len, "id"));
    std::vector<float> values(dimension);
    for (auto& v : values) {
      v = std::bit_cast<float>(in.get_le<std::uint32_t>("vector"));
    }
    if (store.contains(id)) {
      throw ParseError("feature store: duplicate id '" + id + "' at byte " +
                           std::to_string(record_start),
                       record_start);
    }
    try {
      store.insert(std::move(id), FeatureVector(std::move(values)));
    } catch (const ValidationError& e) {
      throw ParseError(std::string("feature store: ") + e.what() + " in record at byte " +
                           std::to_string(record_start),
                       record_start);
    }
  }
  if (!in.done()) {
    throw ParseError("feature store: trailing bytes at byte " + std::to_string(in.pos()),
                     in.pos());
  }
  return store;
}

FeatureStore read_features(const std::filesystem::path& path) {
  try {
    return parse_features(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

std::string format_features(const FeatureStore& store) {
  std::string out(kFeatureMagic, 4);
  put_le<std::uint32_t>(out, store.dimension());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [id, vec] : store.entries()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (float v : vec.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

void write_features(const std::filesystem::path& path, const FeatureStore& store) {
  write_file(path, format_features(store));
}

// ---------------------------------------------------------------------------
// Localizations

Localizations parse_localizations(std::string_view text) {
  const json doc = parse_document(text);
  if (!doc.is_object()) throw ParseError("localizations: expected an object");
  Localizations out;
  for (const auto& [id, entry] : doc.items()) {
    const std::string ctx = "localizations['" + id + "']";
    Localization loc;
    loc.span.start_s = require_number(entry, "start_s", ctx);
    loc.span.end_s = require_number(entry, "end_s", ctx);
    loc.score = require_number(entry, "score", ctx);
    out.emplace(id, loc);
  }
  return out;
}

std::string format_localizations(const Localizations& localizations) {
  json doc = json::object();
  for (const auto& [id, loc] : localizations) {
    doc[id] = {{"start_s", loc.span.start_s},
               {"end_s", loc.span.end_s},
               {"score", loc.score}};
  }
  return dump(doc);
}

void write_localizations(const std::filesystem::path& path,
                         const Localizations& localizations) {
  write_file(path, format_localizations(localizations));
}

}  // namespace ordervqa
