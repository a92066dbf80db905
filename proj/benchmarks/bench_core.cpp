#include <benchmark/benchmark.h>

#include "hetero/influence.hpp"
#include "hetero/model.hpp"
#include "hetero/purify.hpp"
#include "hetero/synthetic.hpp"

using namespace hetero;

namespace {

Dataset sd2(std::size_t n) {
  const std::size_t counts[] = {n - n / 3, n / 3};
  return generate(builtin_mixture(counts, 7));
}

TrainConfig config() {
  TrainConfig c;
  c.ridge = 1e-4;
  return c;
}

void BM_HessianAssembly(benchmark::State& state) {
  const Dataset d = sd2(static_cast<std::size_t>(state.range(0)));
  const auto fit = train(d, config());
  for (auto _ : state) benchmark::DoNotOptimize(loss_hessian(d, fit.params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HessianAssembly)->Arg(100)->Arg(1000);

void BM_Train(benchmark::State& state) {
  const Dataset d = sd2(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(train(d, config()));
}
BENCHMARK(BM_Train)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_InfluenceMatrix(benchmark::State& state) {
  const Dataset d = sd2(static_cast<std::size_t>(state.range(0)));
  const auto fit = train(d, config());
  const InfluenceModel m(d, fit.params);
  for (auto _ : state) benchmark::DoNotOptimize(m.matrix());
}
BENCHMARK(BM_InfluenceMatrix)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_VarianceSummary(benchmark::State& state) {
  const Dataset d = sd2(static_cast<std::size_t>(state.range(0)));
  const auto fit = train(d, config());
  for (auto _ : state) {
    const InfluenceModel m(d, fit.params);
    benchmark::DoNotOptimize(m.variance_summary());
  }
}
BENCHMARK(BM_VarianceSummary)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_LooDeltaWarm(benchmark::State& state) {
  const Dataset d = sd2(static_cast<std::size_t>(state.range(0)));
  const auto base = trained_variance(d, config());
  for (auto _ : state)
    benchmark::DoNotOptimize(loo_delta(0, d, config(), {}, base.variance, base.fit.params));
}
BENCHMARK(BM_LooDeltaWarm)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
