// Serial reference vs OpenMP kernels on one synthetic workload.
#include <benchmark/benchmark.h>

#include "probetraj/kernels.hpp"
#include "probetraj/oracles.hpp"
#include "probetraj/synth.hpp"

using namespace probetraj;

namespace {

struct Workload {
  ActivationDataset data;
  BottleneckProbe probe;
  TrajectoryModel model;
  std::vector<Matrix> seqs;
};

const Workload& workload() {
  static const Workload w = [] {
    Workload w;
    SynthConfig sc;
    sc.dim = 64;
    sc.counts = {250, 250, 250, 250};
    w.data = generate(sc);
    Rng rng(1);
    w.probe = BottleneckProbe::zeros(16, sc.dim);
    w.probe.w1 = oracle::random_matrix(rng, 16, sc.dim, 0.1);
    w.probe.w2 = oracle::random_vector(rng, 16);
    auto tc = sc;
    tc.counts = {100, 100, 0, 0};
    tc.split = SplitTag::kTrain;
    TrajectoryConfig cfg;
    cfg.pca_dim = 16;
    cfg.em.restarts = 1;
    cfg.em.max_iterations = 10;
    w.model = fit_trajectory_model(generate(tc), cfg);
    for (const auto& r : w.data.records) w.seqs.push_back(numkit::pca_project(w.model.pca, r.states));
    return w;
  }();
  return w;
}

void BM_ScorePositionsSerial(benchmark::State& st) {
  const auto& w = workload();
  for (auto _ : st) benchmark::DoNotOptimize(kernels::serial::score_positions(w.probe, w.data));
}

void BM_ScorePositionsOmp(benchmark::State& st) {
  const auto& w = workload();
  kernels::set_thread_count(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::omp::score_positions(w.probe, w.data));
  kernels::set_thread_count(0);
}

void BM_LlrSerial(benchmark::State& st) {
  const auto& w = workload();
  for (auto _ : st) benchmark::DoNotOptimize(kernels::serial::llr_scores(w.model, w.data));
}

void BM_LlrOmp(benchmark::State& st) {
  const auto& w = workload();
  kernels::set_thread_count(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::omp::llr_scores(w.model, w.data));
  kernels::set_thread_count(0);
}

void BM_EstepSerial(benchmark::State& st) {
  const auto& w = workload();
  for (auto _ : st) benchmark::DoNotOptimize(kernels::serial::estep(w.model.hmm_harm, w.seqs));
}

void BM_EstepOmp(benchmark::State& st) {
  const auto& w = workload();
  kernels::set_thread_count(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::omp::estep(w.model.hmm_harm, w.seqs));
  kernels::set_thread_count(0);
}

}  // namespace

BENCHMARK(BM_ScorePositionsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScorePositionsOmp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LlrSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LlrOmp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EstepSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EstepOmp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
