#include <benchmark/benchmark.h>

#include <random>

#include "qbv/contrastive.hpp"
#include "qbv/encoder.hpp"
#include "qbv/training.hpp"

namespace {

qbv::EncoderConfig desk_encoder() {
  qbv::EncoderConfig c;
  c.input_bins = 32;
  c.input_frames = 61;
  return c;
}

qbv::Spectrogram random_spec(const qbv::EncoderConfig& c) {
  qbv::Spectrogram s(c.input_bins, c.input_frames);
  std::mt19937 rng(3);
  std::normal_distribution<double> g(-4.0, 2.0);
  for (auto& v : s.values) v = g(rng);
  return s;
}

void BM_Encode(benchmark::State& state) {
  const auto config = desk_encoder();
  const auto params = qbv::init_encoder(1, config);
  const auto spec = random_spec(config);
  for (auto _ : state) benchmark::DoNotOptimize(qbv::encode(params, spec, true));
}
BENCHMARK(BM_Encode)->Unit(benchmark::kMicrosecond);

void BM_EncodeBackward(benchmark::State& state) {
  const auto config = desk_encoder();
  const auto params = qbv::init_encoder(1, config);
  const auto spec = random_spec(config);
  std::vector<double> upstream(config.embedding_dim, 0.1);
  std::vector<double> grad(params.values().size());
  for (auto _ : state) {
    const auto tape = qbv::encode_with_tape(params, spec, true);
    qbv::encode_backward(params, tape, upstream, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_EncodeBackward)->Unit(benchmark::kMicrosecond);

void BM_NtXent(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  qbv::SimilarityMatrix s(n);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : s.values) v = u(rng);
  const qbv::LossConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(qbv::nt_xent_loss(s, config));
}
BENCHMARK(BM_NtXent)->Arg(16)->Arg(64);

}  // namespace
