#include <benchmark/benchmark.h>

#include "slowfast/drift.hpp"
#include "slowfast/kernels.hpp"

using namespace slowfast;

namespace {

struct GramInput {
  Eigen::MatrixXd B;
  std::vector<double> gamma;
  std::size_t intervals;
};

GramInput gram_input(std::size_t cells, std::size_t intervals) {
  RandomStream rs(1);
  GramInput in{Eigen::MatrixXd(1, static_cast<Eigen::Index>(cells)), {}, intervals};
  for (Eigen::Index i = 0; i < in.B.size(); ++i) in.B.data()[i] = rs.normal();
  for (std::size_t k = 0; k < cells; ++k) in.gamma.push_back(fgn_autocovariance(static_cast<long>(k), HurstIndex(0.85)));
  return in;
}

void BM_IntervalGramSerial(benchmark::State& state) {
  const auto in = gram_input(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(interval_gram_serial(in.B, 1, in.gamma, in.intervals));
}

void BM_IntervalGramOmp(benchmark::State& state) {
  const auto in = gram_input(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(interval_gram_omp(in.B, 1, in.gamma, in.intervals));
}

void BM_FbmBatchSerial(benchmark::State& state) {
  const FbmSampler s(static_cast<std::size_t>(state.range(0)), 1.0, HurstIndex(0.85));
  for (auto _ : state) benchmark::DoNotOptimize(sample_fbm_batch_serial(s, RandomStream(3), 64));
}

void BM_FbmBatchOmp(benchmark::State& state) {
  const FbmSampler s(static_cast<std::size_t>(state.range(0)), 1.0, HurstIndex(0.85));
  for (auto _ : state) benchmark::DoNotOptimize(sample_fbm_batch_omp(s, RandomStream(3), 64));
}

void BM_BuildXi(benchmark::State& state) {
  const auto avg = averaged_system("constant_sigma");
  const std::vector<double> th{1.0};
  QuadratureConfig q{512, state.range(1) == 0 ? Execution::serial : Execution::parallel};
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_xi(avg, th, HurstIndex(0.85), static_cast<std::size_t>(state.range(0)), 1.0, q));
  }
}

}  // namespace

BENCHMARK(BM_IntervalGramSerial)->Args({512, 16})->Args({2048, 64})->Args({4096, 512})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IntervalGramOmp)->Args({512, 16})->Args({2048, 64})->Args({4096, 512})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FbmBatchSerial)->Arg(1 << 12)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FbmBatchOmp)->Arg(1 << 12)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildXi)->Args({16, 0})->Args({16, 1})->Args({128, 0})->Args({128, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
