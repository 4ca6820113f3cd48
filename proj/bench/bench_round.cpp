// Serial reference vs OpenMP client-parallel execution of one synthetic
// round, plus the decoder and meta-gradient kernels on their own.

#include "fedsynth/config.hpp"
#include "fedsynth/distill.hpp"
#include "fedsynth/experiment.hpp"
#include "fedsynth/parallel.hpp"

#include <benchmark/benchmark.h>

namespace {

fedsynth::RunConfig bench_config() {
  fedsynth::RunConfig cfg;
  cfg.fed.num_clients = 20;
  cfg.fed.cohort_size = 5;
  cfg.fed.rounds = 1;
  cfg.fed.transport = fedsynth::fed::Transport::synthetic;
  cfg.distill.distill_steps = 40;
  return cfg;
}

void run_one_round(benchmark::State& state, std::size_t workers) {
  const auto cfg = bench_config();
  const auto data = fedsynth::prepare_data(cfg);
  fedsynth::fed::RoundOptions opts;
  opts.workers = workers;
  for (auto _ : state) {
    fedsynth::fed::ServerState s{fedsynth::initial_model(data.arch, cfg.master_seed), data.clients, cfg.fed,
                                 cfg.distill, cfg.master_seed};
    auto m = fedsynth::fed::run_round(s, 0, data.test, opts);
    benchmark::DoNotOptimize(m.test_accuracy);
  }
}

void BM_RoundSerial(benchmark::State& state) { run_one_round(state, 1); }
void BM_RoundParallel(benchmark::State& state) {
  run_one_round(state, static_cast<std::size_t>(state.range(0)));
}

void BM_DecodeAndMetaGrad(benchmark::State& state) {
  const auto cfg = bench_config();
  const auto data = fedsynth::prepare_data(cfg);
  const auto w0 = fedsynth::initial_model(data.arch, 3);
  fedsynth::Rng rng(7);
  const auto scale = fedsynth::distill::feature_stddev(data.train.X);
  const auto payload = fedsynth::distill::init_payload(data.arch, cfg.distill, scale, nullptr, 1.0, rng);
  const fedsynth::nn::MlpLoss loss{data.arch};
  fedsynth::nn::UnrollTape tape;
  for (auto _ : state) {
    auto g = fedsynth::nn::unroll_decode(loss, w0.values, payload.batches, payload.schedule, 1.0, &tape);
    auto leaves = fedsynth::nn::meta_grad(loss, payload.batches, tape, g);
    benchmark::DoNotOptimize(leaves.front().d_eta);
  }
}

}  // namespace

BENCHMARK(BM_RoundSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RoundParallel)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DecodeAndMetaGrad)->Unit(benchmark::kMicrosecond);

int main(int argc, char** argv) {
  fedsynth::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
