#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "qbv/dsp.hpp"

namespace {

qbv::AudioClip noise_clip(int rate, double seconds) {
  qbv::AudioClip c{"bench", rate, std::vector<float>(static_cast<std::size_t>(rate * seconds))};
  std::mt19937 rng(1);
  std::normal_distribution<float> g(0.0f, 0.2f);
  for (auto& s : c.samples) s = g(rng);
  return c;
}

void BM_LogMel(benchmark::State& state) {
  const qbv::LogMelConfig config;
  const qbv::LogMelExtractor extract(config);
  const auto clip = noise_clip(config.sample_rate, static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(extract(clip));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(clip.samples.size()));
}
BENCHMARK(BM_LogMel)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Cqt(benchmark::State& state) {
  const qbv::CqtConfig config;
  const qbv::CqtExtractor extract(config);
  const auto clip = noise_clip(config.sample_rate, static_cast<double>(state.range(0)) / 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(extract(clip));
}
BENCHMARK(BM_Cqt)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_TwoDft(benchmark::State& state) {
  qbv::Spectrogram spec(96, static_cast<std::size_t>(state.range(0)));
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : spec.values) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(qbv::two_dft(spec));
}
BENCHMARK(BM_TwoDft)->Arg(25)->Arg(50)->Arg(500);

void BM_BaselineFeatures(benchmark::State& state) {
  const qbv::BaselineFeaturizer featurize(qbv::BaselineConfig{});
  const auto clip = noise_clip(qbv::kDefaultSampleRate, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(featurize(clip));
}
BENCHMARK(BM_BaselineFeatures)->Unit(benchmark::kMillisecond);

}  // namespace
