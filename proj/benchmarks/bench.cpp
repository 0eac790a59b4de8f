#include <benchmark/benchmark.h>

#include "d3pr/data.hpp"
#include "d3pr/denoiser.hpp"
#include "d3pr/diffusion.hpp"
#include "d3pr/gaussian.hpp"
#include "d3pr/metrics.hpp"

using namespace d3pr;

namespace {

const std::vector<SequenceRecord>& records() {
  static const auto r = [] {
    SynthConfig sc;
    sc.sequences = 40;
    Rng rng = make_rng(0);
    return synthesize_dataset(sc, rng);
  }();
  return r;
}

DenoiserParams desk_params() {
  DenoiserConfig c;
  c.frames = 27;
  c.joints = 17;
  Rng rng = make_rng(1);
  auto p = init_params(c, rng);
  p.stats.mean.assign(17 * 3, 0.0);
  p.stats.stddev.assign(17 * 3, 0.02);
  return p;
}

void BM_DenoiserForward(benchmark::State& state) {
  const auto p = desk_params();
  const auto& r = records().front();
  for (auto _ : state) benchmark::DoNotOptimize(denoiser_forward(p, r.pose2d, r.noisy3d, 25));
}
BENCHMARK(BM_DenoiserForward)->Unit(benchmark::kMillisecond);

void BM_DenoiserBackward(benchmark::State& state) {
  const auto p = desk_params();
  const auto& r = records().front();
  const TrainingExample ex{r.pose2d, r.noisy3d, 25, r.noisy3d};
  for (auto _ : state) benchmark::DoNotOptimize(denoiser_backward(p, ex));
}
BENCHMARK(BM_DenoiserBackward)->Unit(benchmark::kMillisecond);

void BM_Refine(benchmark::State& state) {
  const Denoiser model(desk_params());
  const auto schedule = NoiseSchedule::cosine(50, 0.008);
  const auto& r = records().front();
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(refine(r.pose2d, r.noisy3d, model, schedule, k));
}
BENCHMARK(BM_Refine)->Arg(1)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Procrustes(benchmark::State& state) {
  const auto& r = records().front();
  for (auto _ : state) benchmark::DoNotOptimize(p_mpjpe(r.noisy3d, *r.gt3d));
}
BENCHMARK(BM_Procrustes);

void BM_FitNoiseModel(benchmark::State& state) {
  const auto views = triplet_views(records());
  for (auto _ : state) benchmark::DoNotOptimize(fit_noise_model(views));
}
BENCHMARK(BM_FitNoiseModel)->Unit(benchmark::kMillisecond);

void BM_SampleNoisyPose(benchmark::State& state) {
  const auto model = fit_noise_model(triplet_views(records()));
  const ConditionalSampler sampler(model);
  const auto& r = records().front();
  Rng rng = make_rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.sample(*r.gt3d, r.pose2d, r.noisy3d, rng));
}
BENCHMARK(BM_SampleNoisyPose);

}  // namespace

BENCHMARK_MAIN();
