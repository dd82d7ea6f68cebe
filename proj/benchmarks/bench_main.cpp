#include <benchmark/benchmark.h>

#include "fitbd/aggregators.hpp"
#include "fitbd/fl_engine.hpp"
#include "fitbd/log.hpp"

namespace fitbd {
namespace {

std::vector<FlatVector> random_updates(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FlatVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    out.emplace_back(std::move(v));
  }
  return out;
}

// Adapter dimension of the default model: 8*4 + 4*96 + 8.
constexpr std::size_t kAdapterDim = 424;

void BM_DctII(benchmark::State& state) {
  const auto v = random_updates(1, static_cast<std::size_t>(state.range(0)), 1).front();
  for (auto _ : state) benchmark::DoNotOptimize(dct_ii(v));
}
BENCHMARK(BM_DctII)->Arg(106)->Arg(424)->Arg(1024);

void BM_Krum(benchmark::State& state) {
  const auto vs = random_updates(static_cast<std::size_t>(state.range(0)), kAdapterDim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(krum(vs, default_krum_f(vs.size())));
}
BENCHMARK(BM_Krum)->Arg(10)->Arg(50);

void BM_FreqFed(benchmark::State& state) {
  const auto vs = random_updates(static_cast<std::size_t>(state.range(0)), kAdapterDim, 3);
  for (auto _ : state) benchmark::DoNotOptimize(freqfed_filter(vs, 0.25));
}
BENCHMARK(BM_FreqFed)->Arg(10)->Arg(50);

void BM_LossAndGrad(benchmark::State& state) {
  ExperimentConfig c;
  c.total_rounds = 1;
  const FederationState s = initialize_federation(c);
  const std::span<const TrainingPair> batch(s.client_data[0].data(), 32);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(s.global_model, batch));
}
BENCHMARK(BM_LossAndGrad);

void BM_LocalTrain(benchmark::State& state) {
  ExperimentConfig c;
  c.total_rounds = 1;
  const FederationState s = initialize_federation(c);
  for (auto _ : state) {
    Rng rng(4);
    benchmark::DoNotOptimize(local_train(s.global_model, s.client_data[0], 1, c.lr, c.batch_size, rng));
  }
}
BENCHMARK(BM_LocalTrain);

void BM_RunRound(benchmark::State& state) {
  set_log_level(LogLevel::kSilent);
  ExperimentConfig c;
  c.total_rounds = 1'000'000;
  FederationState s = initialize_federation(c);
  RoundOptions options;
  options.lanes = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_round(s, options));
}
BENCHMARK(BM_RunRound)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace fitbd

BENCHMARK_MAIN();
