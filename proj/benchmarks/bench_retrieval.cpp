#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "qbv/qbve.hpp"
#include "qbv/retrieval.hpp"

namespace {

qbv::QbveBlock random_block(std::size_t rows, std::uint32_t dim) {
  qbv::QbveBlock b;
  b.dim = dim;
  std::mt19937 rng(5);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (std::size_t i = 0; i < rows; ++i) {
    b.ids.push_back("ref_" + std::to_string(i));
    for (std::uint32_t d = 0; d < dim; ++d) b.values.push_back(g(rng));
  }
  return b;
}

void BM_QueryVector(benchmark::State& state) {
  const auto index = qbv::build_index(random_block(static_cast<std::size_t>(state.range(0)), 128));
  std::vector<double> q(128);
  std::mt19937 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : q) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(qbv::query_vector(index, q, 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QueryVector)->Arg(1000)->Arg(100000)->Unit(benchmark::kMicrosecond);

void BM_QbveEncode(benchmark::State& state) {
  const auto block = random_block(static_cast<std::size_t>(state.range(0)), 128);
  for (auto _ : state) benchmark::DoNotOptimize(qbv::encode_qbve(block));
}
BENCHMARK(BM_QbveEncode)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_QbveDecode(benchmark::State& state) {
  const auto bytes = qbv::encode_qbve(random_block(static_cast<std::size_t>(state.range(0)), 128));
  for (auto _ : state) benchmark::DoNotOptimize(qbv::decode_qbve(bytes));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_QbveDecode)->Arg(1000)->Unit(benchmark::kMicrosecond);

}  // namespace
