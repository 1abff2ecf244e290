#include <benchmark/benchmark.h>

#include "simulrl/alignment.hpp"
#include "simulrl/bleu.hpp"
#include "simulrl/generate.hpp"
#include "simulrl/grpo.hpp"
#include "simulrl/model.hpp"
#include "simulrl/rng.hpp"

using namespace simulrl;

namespace {

// Desk-scale shapes: default environment and model.
struct Desk {
  EnvConfig env;
  ModelConfig mc = with_env_shapes(ModelConfig{}, env);
  ModelParams params = ModelParams::initialize(mc, 1);
  Utterance u = generate_utterance(env, 42);

  TokenGrid pair() const {
    AlignConfig align;
    align.mu = 0.32;
    align.max_frames = mc.context_frames;
    Rng rng(3);
    return apply_acoustic_delay(build_training_pair(u, align, env, rng), mc.acoustic_delay_frames);
  }
};

void BM_SupervisedForwardBackward(benchmark::State& state) {
  Desk d;
  const auto grid = d.pair();
  for (auto _ : state) benchmark::DoNotOptimize(supervised_loss_and_grads(d.params, grid).loss);
  state.counters["frames"] = grid.num_frames();
}
BENCHMARK(BM_SupervisedForwardBackward)->Unit(benchmark::kMillisecond);

void BM_TemporalForward(benchmark::State& state) {
  Desk d;
  const auto grid = d.pair();
  for (auto _ : state) benchmark::DoNotOptimize(temporal_forward(d.params, grid));
}
BENCHMARK(BM_TemporalForward)->Unit(benchmark::kMillisecond);

void BM_SampleRollout(benchmark::State& state) {
  Desk d;
  const int frames = static_cast<int>(state.range(0));
  const auto src = make_source_grid(d.u, d.env, frames, d.mc.acoustic_delay_frames);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Rng rng(++seed);
    benchmark::DoNotOptimize(sample_translation(d.params, src, SamplingConfig{}, rng, frames));
  }
}
BENCHMARK(BM_SampleRollout)->Arg(32)->Arg(96)->Unit(benchmark::kMillisecond);

void BM_GrpoObjective(benchmark::State& state) {
  Desk d;
  RLConfig cfg;
  cfg.rollout_frames = 96;
  cfg.reward.words_per_checkpoint = 4;
  const std::vector<GroupBatch> groups{sample_group(d.params, d.u, d.env, cfg, 7)};
  for (auto _ : state) benchmark::DoNotOptimize(grpo_objective(d.params, groups, cfg).objective);
}
BENCHMARK(BM_GrpoObjective)->Unit(benchmark::kMillisecond);

void BM_SentenceBleu(benchmark::State& state) {
  Rng rng(1);
  std::vector<int> hyp(static_cast<std::size_t>(state.range(0))), ref(hyp.size());
  for (auto& t : hyp) t = rng.uniform_int(3, 52);
  for (auto& t : ref) t = rng.uniform_int(3, 52);
  const BleuConfig cfg{4, Smoothing::exponential};
  for (auto _ : state) benchmark::DoNotOptimize(bleu(hyp, ref, cfg));
}
BENCHMARK(BM_SentenceBleu)->Arg(16)->Arg(64);

}  // namespace
BENCHMARK_MAIN();
