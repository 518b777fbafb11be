// SPDX-License-Identifier: Apache-2.0
//
// ordervqa command-line tool. Each subcommand reads and writes the file
// formats of the core library. Failures print a single JSON error record on
// stderr and exit non-zero (2 for usage errors, 1 otherwise).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ordervqa/checkpoint.hpp"
#include "ordervqa/composition.hpp"
#include "ordervqa/config.hpp"
#include "ordervqa/grounding.hpp"
#include "ordervqa/io.hpp"
#include "ordervqa/metrics.hpp"
#include "ordervqa/oracle.hpp"
#include "ordervqa/pairwise.hpp"
#include "ordervqa/question_gen.hpp"
#include "ordervqa/random.hpp"
#include "ordervqa/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ordervqa;

namespace {

constexpr const char* kAnnotationsFile = "annotations.json";
constexpr const char* kImagesFile = "images.ovqf";
constexpr const char* kSegmentsFile = "segments.ovqf";
constexpr const char* kWorldFile = "world.json";

// Bad flag combinations found after parsing; reported like CLI11 errors.
class UsageError : public Error {
 public:
  using Error::Error;
};

void print_error(std::string_view kind, std::string_view message,
                 std::optional<std::size_t> offset = {}) {
  json rec = {{"error", {{"kind", kind}, {"message", message}}}};
  if (offset) rec["error"]["offset"] = *offset;
  std::cerr << rec.dump() << "\n";
}

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : read_run_config(path);
}

std::vector<VideoAnnotation> load_videos(const fs::path& path) {
  return read_annotations(path).videos;
}

std::set<std::string> video_ids_of(const std::string& questions_path) {
  std::set<std::string> ids;
  if (questions_path.empty()) return ids;
  for (const auto& q : read_questions(questions_path).questions) ids.insert(q.video_id);
  return ids;
}

const VideoAnnotation& find_video(const std::map<std::string, const VideoAnnotation*>& by_id,
                                  const std::string& id) {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw ValidationError("video " + id + " is not in the annotations");
  return *it->second;
}

void print_json(const json& doc) { std::cout << doc.dump() << "\n"; }

// ---------------------------------------------------------------------------

struct GensynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_videos;
};

void run_gensynth(const GensynthArgs& a) {
  WorldConfig world = load_config(a.config).world;
  if (a.seed) world.seed = *a.seed;
  if (a.n_videos) world.n_videos = *a.n_videos;
  const SyntheticWorld w = gen_world(world);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_annotations(dir / kAnnotationsFile, w.videos);
  write_features(dir / kImagesFile, w.images);
  write_features(dir / kSegmentsFile, w.segments);
  write_file(dir / kWorldFile, to_json(world).dump(2) + "\n");
  print_json({{"videos", w.videos.size()},
              {"images", w.images.size()},
              {"segments", w.segments.size()},
              {"signal_to_noise", world.signal_to_noise()}});
}

struct GenqArgs {
  std::string task;
  std::string annotations;
  std::string config;
  std::string exclude;
  std::string out;
  std::string key;
  std::optional<int> n;
  std::optional<std::uint64_t> seed;
  std::optional<double> fps;
  bool strip = false;
};

void run_genq(const GenqArgs& a) {
  QuestionGenOptions opts = load_config(a.config).questions;
  if (a.n) opts.n_questions = *a.n;
  if (a.seed) opts.seed = *a.seed;
  if (a.fps) opts.fps = *a.fps;
  for (auto& id : video_ids_of(a.exclude)) opts.excluded_video_ids.insert(id);
  const auto videos = load_videos(a.annotations);
  const Task task = parse_task(a.task);
  const QuestionSet set = task == Task::kImageOrdering ? gen_image_ordering(videos, opts)
                                                       : gen_step_ordering(videos, opts);
  if (!a.key.empty()) write_predictions(a.key, answer_key(set));
  write_questions(a.out, a.strip ? strip_answers(set) : set);
  print_json({{"task", to_string(set.task)}, {"questions", set.questions.size()}});
}

struct PlanArgs {
  std::string annotations;
  std::string out;
  double fps = 25.0;
};

void run_plan_frames(const PlanArgs& a) {
  const auto plans = plan_frames(load_videos(a.annotations), a.fps);
  write_file(a.out, format_frame_plans(plans, a.fps));
  std::size_t flagged = 0;
  for (const auto& p : plans) flagged += p.duplicate_warning ? 1 : 0;
  print_json({{"plans", plans.size()}, {"duplicate_warnings", flagged}});
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string model;
  std::string config;
  std::string data;
  std::string out;
  std::string exclude;
  std::optional<std::uint64_t> seed;
  double val_fraction = 0.1;
};

std::vector<std::string> captions_of(const std::vector<VideoAnnotation>& videos) {
  std::vector<std::string> out;
  for (const auto& v : videos) {
    for (const auto& s : v.steps) out.push_back(s.caption);
  }
  return out;
}

void run_train(const TrainArgs& a) {
  RunConfig cfg = load_config(a.config);
  if (a.seed) {
    cfg.pairwise.seed = cfg.composition.seed = cfg.grounding.seed = *a.seed;
  }
  if (a.val_fraction < 0.0 || a.val_fraction >= 1.0) {
    throw UsageError("--val-fraction must lie in [0, 1)");
  }
  const fs::path dir(a.data);
  std::vector<VideoAnnotation> videos;
  const auto excluded = video_ids_of(a.exclude);
  for (auto& v : load_videos(dir / kAnnotationsFile)) {
    if (!excluded.contains(v.video_id)) videos.push_back(std::move(v));
  }
  if (videos.empty()) throw ValidationError("no training videos left");
  const double fps = cfg.questions.fps;

  Checkpoint ckpt;
  if (a.model == "pairwise_image" || a.model == "pairwise_text") {
    PairwiseConfig pc = cfg.pairwise;
    pc.kind = a.model == "pairwise_image" ? ItemKind::kImage : ItemKind::kCaption;
    const auto n_val = static_cast<std::size_t>(a.val_fraction * static_cast<double>(videos.size()));
    const std::vector<VideoAnnotation> train(videos.begin(), videos.end() - static_cast<long>(n_val));
    const std::vector<VideoAnnotation> val(videos.end() - static_cast<long>(n_val), videos.end());
    const auto train_pairs = build_pair_dataset(train, {pc.kind, derive_seed(pc.seed, "train"), 0, fps});
    const auto val_pairs = build_pair_dataset(val, {pc.kind, derive_seed(pc.seed, "val"), 0, fps});
    FeatureStore images;
    std::optional<PairwiseComparator> model;
    if (pc.kind == ItemKind::kImage) {
      images = read_features(dir / kImagesFile);
      model.emplace(pc, &images);
    } else {
      const auto captions = captions_of(train);
      model.emplace(pc, Vocabulary::build(captions));
    }
    ckpt = model->to_checkpoint(train_pairwise(*model, train_pairs, val_pairs));
  } else if (a.model == "composition") {
    const CompositionConfig& cc = cfg.composition;
    std::vector<CompositionTriplet> triplets;
    for (const auto& v : videos) {
      for (int s = 0; s < cc.splits_per_video; ++s) {
        for (auto& t : build_triplets(v, cc.n_parts,
                                      derive_seed(cc.seed, "split/" + std::to_string(s)), fps)) {
          triplets.push_back(std::move(t));
        }
      }
    }
    const FeatureStore images = read_features(dir / kImagesFile);
    const auto captions = captions_of(videos);
    CompositionModel model(cc, &images, Vocabulary::build(captions));
    ckpt = model.to_checkpoint(train_composition(model, triplets));
  } else if (a.model == "scdm" || a.model == "scdmplus") {
    GroundingConfig gc = cfg.grounding;
    gc.face_head = a.model == "scdmplus";
    const FeatureStore segments = read_features(dir / kSegmentsFile);
    const auto captions = captions_of(videos);
    GroundingModel model(gc, segments.dimension(), Vocabulary::build(captions));
    ckpt = model.to_checkpoint(train_grounding(model, make_grounding_data(videos, segments)));
  } else {
    throw UsageError("unknown model '" + a.model + "'");
  }
  write_checkpoint(a.out, ckpt);
  print_json({{"model", ckpt.model},
              {"videos", videos.size()},
              {"final", ckpt.log.empty() ? json() : ckpt.log.back()}});
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string ckpt;
  std::string pairwise_ckpt;
  std::string questions;
  std::string features;
  std::string annotations;
  std::string strategy;
  std::string localizations;
  std::string out;
  std::uint64_t seed = 0;
};

std::string default_strategy(const std::string& model) {
  if (model == "composition") return "greedy_tirg";
  if (model == "scdm" || model == "scdmplus") return "localize_center";
  if (model == "random") return "random";
  return "pairwise";
}

Checkpoint load_checkpoint_for(const std::string& path, const std::string& model) {
  if (path.empty()) throw UsageError("--ckpt is required for model " + model);
  Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.model != model) {
    throw ValidationError("checkpoint " + path + " holds a " + ckpt.model + " model, not " + model);
  }
  return ckpt;
}

void run_predict(const PredictArgs& a) {
  const std::string strategy = a.strategy.empty() ? default_strategy(a.model) : a.strategy;
  const QuestionSet set = read_questions(a.questions);
  std::vector<VideoAnnotation> videos;
  if (!a.annotations.empty()) videos = load_videos(a.annotations);
  std::map<std::string, const VideoAnnotation*> by_id;
  for (const auto& v : videos) by_id[v.video_id] = &v;
  FeatureStore features;
  if (!a.features.empty()) features = read_features(a.features);

  const bool oracle = a.model == "oracle";
  if (oracle && videos.empty()) throw UsageError("the oracle model needs --annotations");

  std::unique_ptr<PairwiseScorer> pairwise;
  std::unique_ptr<CompositionScorer> composition;
  std::unique_ptr<Localizer> localizer;
  if (strategy == "pairwise") {
    if (oracle) {
      pairwise = std::make_unique<PairwiseOracle>(videos);
    } else if (a.model == "pairwise_image" || a.model == "pairwise_text") {
      pairwise = std::make_unique<PairwiseComparator>(
          PairwiseComparator::from_checkpoint(load_checkpoint_for(a.ckpt, a.model), &features));
    } else {
      throw UsageError("strategy pairwise needs model oracle, pairwise_image or pairwise_text");
    }
  } else if (strategy == "greedy_tirg") {
    if (oracle) {
      pairwise = std::make_unique<PairwiseOracle>(videos);
      composition = std::make_unique<CompositionOracle>(videos);
    } else if (a.model == "composition") {
      composition = std::make_unique<CompositionModel>(
          CompositionModel::from_checkpoint(load_checkpoint_for(a.ckpt, a.model), &features));
      pairwise = std::make_unique<PairwiseComparator>(PairwiseComparator::from_checkpoint(
          load_checkpoint_for(a.pairwise_ckpt, "pairwise_image"), &features));
    } else {
      throw UsageError("strategy greedy_tirg needs model oracle or composition");
    }
  } else if (strategy == "localize_center") {
    if (videos.empty()) throw UsageError("strategy localize_center needs --annotations");
    if (oracle) {
      localizer = std::make_unique<LocalizerOracle>(videos);
    } else if (a.model == "scdm" || a.model == "scdmplus") {
      localizer = std::make_unique<GroundingModel>(
          GroundingModel::from_checkpoint(load_checkpoint_for(a.ckpt, a.model)));
    } else {
      throw UsageError("strategy localize_center needs model oracle, scdm or scdmplus");
    }
  } else if (strategy != "random") {
    throw UsageError("unknown strategy '" + strategy + "'");
  }

  Rng rng(derive_seed(a.seed, "predict/random"));
  std::map<std::string, VideoClip> clips;
  Predictions predictions;
  Localizations located;
  for (const auto& q : set.questions) {
    int choice = 0;
    if (strategy == "random") {
      choice = uniform_int(rng, 0, kCandidatesPerQuestion - 1);
    } else if (strategy == "pairwise") {
      choice = select_answer_pairwise(*pairwise, q);
    } else if (strategy == "greedy_tirg") {
      choice = select_answer_greedy(*pairwise, *composition, q);
    } else {
      if (q.task != Task::kStepOrdering) {
        throw ValidationError("localize_center orders captions; " + q.question_id +
                              " is an image ordering question");
      }
      auto it = clips.find(q.video_id);
      if (it == clips.end()) {
        const auto& video = find_video(by_id, q.video_id);
        VideoClip clip;
        if (features.dimension() > 0) {
          clip = load_clip(features, video);
        } else if (oracle) {
          clip = {video.video_id, {}, video.duration_s};
        } else {
          throw UsageError("model " + a.model + " needs --features with video segments");
        }
        it = clips.emplace(q.video_id, std::move(clip)).first;
      }
      choice = select_answer_localize(*localizer, it->second, q);
      if (!a.localizations.empty()) {
        for (std::size_t p = 0; p < q.items.size(); ++p) {
          located[q.question_id + "/" + std::to_string(p)] =
              localizer->localize(it->second, q.items[p]);
        }
      }
    }
    predictions[q.question_id] = choice;
  }
  if (!a.localizations.empty()) write_localizations(a.localizations, located);
  write_predictions(a.out, predictions);
  print_json({{"strategy", strategy}, {"predictions", predictions.size()}});
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string predictions;
  std::string key;
  std::string report;
  std::string annotations;
  bool per_gap = false;
};

void run_score(const ScoreArgs& a) {
  const Predictions predictions = read_predictions(a.predictions);
  const std::string key_text = read_file(a.key);
  const json key_doc = parse_json_document(key_text);
  std::optional<QuestionSet> questions;
  Predictions key;
  if (key_doc.is_object() && key_doc.contains("questions")) {
    questions = parse_questions(key_text);
    key = answer_key(*questions);
  } else {
    key = parse_predictions(key_text);
  }

  EvalReport report;
  report.task = questions ? std::string(to_string(questions->task)) : "multi_choice";
  report.n = static_cast<int>(key.size());
  report.accuracy = multi_choice_accuracy(predictions, key);

  if (a.per_gap) {
    if (!questions || a.annotations.empty()) {
      throw UsageError("--per-gap needs a questions file as --key and --annotations");
    }
    const auto videos = load_videos(a.annotations);
    std::map<std::string, const VideoAnnotation*> by_id;
    for (const auto& v : videos) by_id[v.video_id] = &v;
    std::map<std::string, std::pair<int, int>> tally;  // bucket -> (correct, total)
    for (const auto& q : questions->questions) {
      auto& [correct, total] =
          tally[gap_bucket(smallest_step_gap(q, find_video(by_id, q.video_id)))];
      correct += predictions.at(q.question_id) == *q.answer_index ? 1 : 0;
      ++total;
    }
    std::map<std::string, double> per_gap;
    for (const auto& [bucket, counts] : tally) {
      per_gap[bucket] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    report.per_gap = std::move(per_gap);
  }
  const json doc = report.to_json();
  if (!a.report.empty()) write_file(a.report, doc.dump(2) + "\n");
  print_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ordering questions over makeup videos: generation, models and scoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ordervqa 0.1.0");

  GensynthArgs gs;
  auto* gensynth = app.add_subcommand("gensynth", "Generate a synthetic world");
  gensynth->add_option("--config", gs.config, "Run config (JSON)")->check(CLI::ExistingFile);
  gensynth->add_option("--out", gs.out, "Output directory")->required();
  gensynth->add_option("--seed", gs.seed, "Overrides world.seed");
  gensynth->add_option("--n-videos", gs.n_videos, "Overrides world.n_videos");

  GenqArgs gq;
  auto* genq = app.add_subcommand("genq", "Generate multi-choice ordering questions");
  genq->add_option("--task", gq.task, "image_ordering or step_ordering")
      ->required()
      ->check(CLI::IsMember({"image_ordering", "step_ordering"}));
  genq->add_option("--annotations", gq.annotations)->required()->check(CLI::ExistingFile);
  genq->add_option("--config", gq.config, "Run config (JSON)")->check(CLI::ExistingFile);
  genq->add_option("--n", gq.n, "Number of questions");
  genq->add_option("--seed", gq.seed);
  genq->add_option("--fps", gq.fps, "Frame rate used for image ids");
  genq->add_option("--exclude", gq.exclude, "Questions file whose videos are excluded")
      ->check(CLI::ExistingFile);
  genq->add_option("--out", gq.out)->required();
  genq->add_option("--key", gq.key, "Also write the answer key here");
  genq->add_flag("--strip-answers", gq.strip, "Omit answers from the questions file");

  PlanArgs pa;
  auto* plan = app.add_subcommand("plan-frames", "Write step-end frame sampling plans");
  plan->add_option("--annotations", pa.annotations)->required()->check(CLI::ExistingFile);
  plan->add_option("--fps", pa.fps)->required()->check(CLI::PositiveNumber);
  plan->add_option("--out", pa.out)->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model on a data directory");
  train->add_option("--model", ta.model)
      ->required()
      ->check(CLI::IsMember({"pairwise_image", "pairwise_text", "composition", "scdm", "scdmplus"}));
  train->add_option("--config", ta.config, "Run config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--data", ta.data, "Directory with annotations.json, images.ovqf, segments.ovqf")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--seed", ta.seed, "Overrides the model section seed");
  train->add_option("--exclude", ta.exclude, "Questions file whose videos are held out")
      ->check(CLI::ExistingFile);
  train->add_option("--val-fraction", ta.val_fraction,
                    "Share of videos held out for pairwise validation");

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Answer questions");
  predict->add_option("--model", pr.model)
      ->required()
      ->check(CLI::IsMember({"oracle", "random", "pairwise_image", "pairwise_text", "composition",
                             "scdm", "scdmplus"}));
  predict->add_option("--ckpt", pr.ckpt)->check(CLI::ExistingFile);
  predict->add_option("--pairwise-ckpt", pr.pairwise_ckpt, "pairwise_image checkpoint for greedy_tirg")
      ->check(CLI::ExistingFile);
  predict->add_option("--questions", pr.questions)->required()->check(CLI::ExistingFile);
  predict->add_option("--features", pr.features, "Image or segment feature store")
      ->check(CLI::ExistingFile);
  predict->add_option("--annotations", pr.annotations)->check(CLI::ExistingFile);
  predict->add_option("--strategy", pr.strategy)
      ->check(CLI::IsMember({"pairwise", "greedy_tirg", "localize_center", "random"}));
  predict->add_option("--localizations", pr.localizations, "Also write caption localizations");
  predict->add_option("--seed", pr.seed, "Seed of the random strategy");
  predict->add_option("--out", pr.out)->required();

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score predictions against an answer key");
  score->add_option("--predictions", sc.predictions)->required()->check(CLI::ExistingFile);
  score->add_option("--key", sc.key, "Questions file with answers, or a predictions-format key")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--report", sc.report);
  score->add_option("--annotations", sc.annotations)->check(CLI::ExistingFile);
  score->add_flag("--per-gap", sc.per_gap, "Bucket accuracy by each question's smallest step gap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }

  try {
    if (*gensynth) run_gensynth(gs);
    if (*genq) run_genq(gq);
    if (*plan) run_plan_frames(pa);
    if (*train) run_train(ta);
    if (*predict) run_predict(pr);
    if (*score) run_score(sc);
  } catch (const UsageError& e) {
    print_error("UsageError", e.what());
    return 2;
  } catch (const ParseError& e) {
    print_error("ParseError", e.what(), e.offset());
    return 1;
  } catch (const ValidationError& e) {
    print_error("ValidationError", e.what());
    return 1;
  } catch (const NumericError& e) {
    print_error("NumericError", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("Error", e.what());
    return 1;
  }
  return 0;
}
