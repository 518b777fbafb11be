// SPDX-License-Identifier: Apache-2.0
//
// Hot paths: answering questions, sorting, grounding forward passes and
// single training steps.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "ordervqa/composition.hpp"
#include "ordervqa/grounding.hpp"
#include "ordervqa/metrics.hpp"
#include "ordervqa/oracle.hpp"
#include "ordervqa/pairwise.hpp"
#include "ordervqa/question_gen.hpp"
#include "ordervqa/synthetic.hpp"

namespace ordervqa {
namespace {

const SyntheticWorld& world() {
  static const SyntheticWorld w = [] {
    WorldConfig c;
    c.n_videos = 60;
    c.seed = 9;
    return gen_world(c);
  }();
  return w;
}

const QuestionSet& image_questions() {
  static const QuestionSet set = [] {
    QuestionGenOptions o;
    o.n_questions = 200;
    o.seed = 3;
    return gen_image_ordering(world().videos, o);
  }();
  return set;
}

std::vector<std::string> captions_of(const std::vector<VideoAnnotation>& videos) {
  std::vector<std::string> out;
  for (const auto& v : videos) {
    for (const auto& s : v.steps) out.push_back(s.caption);
  }
  return out;
}

void BM_GenWorld(benchmark::State& state) {
  WorldConfig c;
  c.n_videos = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gen_world(c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenWorld)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_LevenshteinPermutation(benchmark::State& state) {
  const Permutation5 a({4, 0, 3, 1, 2});
  const Permutation5 b({1, 2, 0, 4, 3});
  for (auto _ : state) benchmark::DoNotOptimize(levenshtein(a, b));
}
BENCHMARK(BM_LevenshteinPermutation);

void BM_TiouRecall(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<TemporalSpan>> preds(n, {{0, 10}, {5, 15}, {20, 40}, {1, 2}, {3, 9}});
  const std::vector<TemporalSpan> truth(n, TemporalSpan{4, 12});
  for (auto _ : state) benchmark::DoNotOptimize(recall_at_k_tiou(preds, truth, 5, 0.5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TiouRecall)->Arg(1000);

void BM_AnswerPairwiseComparator(benchmark::State& state) {
  PairwiseConfig c;
  c.hidden = {static_cast<int>(state.range(0)), 64};
  const PairwiseComparator model(c, &world().images);
  const auto& q = image_questions().questions.front();
  for (auto _ : state) benchmark::DoNotOptimize(select_answer_pairwise(model, q));
}
BENCHMARK(BM_AnswerPairwiseComparator)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_GreedySortOracle(benchmark::State& state) {
  const PairwiseOracle pairwise(world().videos);
  const CompositionOracle composition(world().videos);
  const auto& q = image_questions().questions.front();
  for (auto _ : state) benchmark::DoNotOptimize(select_answer_greedy(pairwise, composition, q));
}
BENCHMARK(BM_GreedySortOracle)->Unit(benchmark::kMicrosecond);

void BM_GreedySortComposition(benchmark::State& state) {
  const PairwiseComparator pairwise(PairwiseConfig{}, &world().images);
  CompositionConfig c;
  c.text_hidden = static_cast<int>(state.range(0));
  const CompositionModel composition(c, &world().images,
                                     Vocabulary::build(captions_of(world().videos)));
  const auto& q = image_questions().questions.front();
  for (auto _ : state) benchmark::DoNotOptimize(select_answer_greedy(pairwise, composition, q));
}
BENCHMARK(BM_GreedySortComposition)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_CompositionBatchStep(benchmark::State& state) {
  CompositionConfig c;
  c.text_hidden = 64;
  const CompositionModel model(c, &world().images, Vocabulary::build(captions_of(world().videos)));
  std::vector<CompositionTriplet> triplets;
  for (std::size_t v = 0; triplets.size() < 32; ++v) {
    for (auto& t : build_triplets(world().videos[v], 0, v)) triplets.push_back(std::move(t));
  }
  std::vector<const CompositionTriplet*> batch;
  for (const auto& t : triplets) batch.push_back(&t);
  for (auto _ : state) {
    nn::Var loss = model.batch_loss(batch);
    nn::backward(loss);
    for (auto v : model.parameters().vars()) v.zero_grad();
  }
}
BENCHMARK(BM_CompositionBatchStep)->Unit(benchmark::kMillisecond);

// Grounding forward at the full 1024-segment pyramid, channel width varied.
void BM_GroundingForward(benchmark::State& state) {
  GroundingConfig c;
  const int d = static_cast<int>(state.range(0));
  c.embed_dim = c.text_hidden = c.hidden_dim = c.attention_dim = d;
  const auto& video = world().videos.front();
  const GroundingModel model(c, world().segments.dimension(),
                             Vocabulary::build(captions_of(world().videos)));
  const VideoClip clip = load_clip(world().segments, video);
  const std::string& caption = video.steps.front().caption;
  for (auto _ : state) benchmark::DoNotOptimize(model.localize(clip, caption));
}
BENCHMARK(BM_GroundingForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GroundingQueryLossBackward(benchmark::State& state) {
  GroundingConfig c;
  c.max_video_segments = 64;
  c.pyramid = {32, 16, 8, 4};
  const auto data = make_grounding_data(world().videos, world().segments);
  const GroundingModel model(c, world().segments.dimension(),
                             Vocabulary::build(captions_of(world().videos)));
  const auto& q = data.queries.front();
  for (auto _ : state) {
    nn::Var loss = model.query_loss(data.clips[q.clip], q.caption, q.span, q.areas);
    if (loss.defined()) nn::backward(loss);
    for (auto v : model.parameters().vars()) v.zero_grad();
  }
}
BENCHMARK(BM_GroundingQueryLossBackward)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ordervqa

BENCHMARK_MAIN();
