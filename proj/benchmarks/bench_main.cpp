#include "shica/covariance.hpp"
#include "shica/gev.hpp"
#include "shica/jointdiag.hpp"
#include "shica/mcca.hpp"
#include "shica/shica_j.hpp"
#include "shica/shica_ml.hpp"
#include "shica/synth.hpp"

#include <benchmark/benchmark.h>

namespace shica {
namespace {

Generated scenario(const char* name, std::size_t n) { return generate(preset_scenario(name, n, 7)); }

void BM_SampleCovariance(benchmark::State& state) {
  const Generated g = scenario("gauss", static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sample_covariance(g.data, true));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleCovariance)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);

void BM_SolveGev(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  ScenarioSpec spec = preset_scenario("gauss", 10, 3);
  spec.p = p;
  spec.sources.assign(p, {});
  const BlockPencil pencil = assemble_full(model_covariance(draw_model(spec)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_gev(pencil.C, pencil.D, p));
}
BENCHMARK(BM_SolveGev)->Arg(4)->Arg(10)->Arg(40)->Unit(benchmark::kMicrosecond);

void BM_FitMcca(benchmark::State& state) {
  const BlockCovariance cov = sample_covariance(scenario("gauss", 10000).data, true);
  for (auto _ : state) benchmark::DoNotOptimize(fit_mcca(cov));
}
BENCHMARK(BM_FitMcca)->Unit(benchmark::kMicrosecond);

void BM_JointDiagonalize(benchmark::State& state) {
  const BlockCovariance cov = sample_covariance(scenario("gauss", 10000).data, true);
  const MccaFit fit = fit_mcca(cov);
  JdProblem problem;
  for (std::size_t i = 0; i < cov.m(); ++i) problem.mats.push_back(fit.unmixing[i] * cov.block(i, i) * fit.unmixing[i].transpose());
  for (auto _ : state) benchmark::DoNotOptimize(joint_diagonalize(problem));
}
BENCHMARK(BM_JointDiagonalize)->Unit(benchmark::kMicrosecond);

void BM_FitShicaJ(benchmark::State& state) {
  const Generated g = scenario("gauss", static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_shica_j(g.data));
}
BENCHMARK(BM_FitShicaJ)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_MlIteration(benchmark::State& state) {
  const Generated g = scenario("nongauss", static_cast<std::size_t>(state.range(0)));
  const MultiViewData x = g.data.centered();
  MlOptions once;
  once.max_iter = 1;
  const MlState start = fit_shica_ml(x, {}, once);
  for (auto _ : state) benchmark::DoNotOptimize(ml_iteration(x, start));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlIteration)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_MixturePosterior(benchmark::State& state) {
  double y = -3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mixture_posterior(y, 0.3));
    y = y > 3.0 ? -3.0 : y + 1e-3;
  }
}
BENCHMARK(BM_MixturePosterior);

}  // namespace
}  // namespace shica

BENCHMARK_MAIN();
