#include <benchmark/benchmark.h>

#include "rqrf/corpus.hpp"
#include "rqrf/evaluator.hpp"
#include "rqrf/sampler.hpp"
#include "rqrf/trainer.hpp"

using namespace rqrf;

namespace {

// Reference-sized marketplace, built once.
struct Setup {
  Universe universe = generate_universe(GenConfig{}, 7);
  ClickLog log = simulate_click_log(universe, 20000, 1);
  WordVecTable vectors = pretrained_word_vectors(universe, 0.1, 2);
  std::vector<TrainingSample> samples = draw_samples(log, universe, vectors, 4, 3);
  ModelParams<float> model = initial_model(universe, ModelConfig{}, 4);
  TokenizedCorpus texts = TokenizedCorpus::build(universe, model.vocab, model.config.tower);
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_SimulateClickLog(benchmark::State& state) {
  const Universe& u = setup().universe;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_click_log(u, static_cast<std::uint64_t>(state.range(0)), 5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateClickLog)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_DrawSamples(benchmark::State& state) {
  const Setup& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(draw_samples(s.log, s.universe, s.vectors, 4, 6));
}
BENCHMARK(BM_DrawSamples)->Unit(benchmark::kMillisecond);

void BM_EncodeQuery(benchmark::State& state) {
  const Setup& s = setup();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode(s.texts.queries[i % s.texts.queries.size()], s.model.query));
    ++i;
  }
}
BENCHMARK(BM_EncodeQuery);

void BM_BatchLossForwardBackward(benchmark::State& state) {
  const Setup& s = setup();
  const std::span<const TrainingSample> batch(s.samples.data(), static_cast<std::size_t>(state.range(0)));
  ModelParams<float> grads = ModelParams<float>::zeros(s.model.config, s.model.vocab);
  for (auto _ : state) {
    grads.query.set_zero();
    grads.keyword.set_zero();
    benchmark::DoNotOptimize(batch_loss<float>(batch, s.texts, s.model, &grads));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchLossForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_RankCandidates(benchmark::State& state) {
  const Setup& s = setup();
  const KeywordIndex index = KeywordIndex::build(s.model, s.universe, s.texts);
  const Vector<float> q = encode(s.texts.queries[0], s.model.query);
  const CategoryIndex& cat = index.category(s.universe.queries[0].category);
  for (auto _ : state) benchmark::DoNotOptimize(rank_candidates(q, cat));
}
BENCHMARK(BM_RankCandidates);

}  // namespace

BENCHMARK_MAIN();
