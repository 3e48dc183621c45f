#include <benchmark/benchmark.h>

#include "kcal/sampler.hpp"

namespace {

double gaussian(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return -0.5 * s;
}

void BM_StretchSweep(benchmark::State& s) {
  const auto L = static_cast<std::size_t>(s.range(0));
  const std::size_t dim = 6;
  std::vector<double> x(L * dim);
  kcal::Rng r(1, 0, 0);
  for (double& v : x) v = r.normal();
  auto state = kcal::make_ensemble(L, dim, x, gaussian);
  kcal::SamplerConfig cfg;
  cfg.walkers = L;
  std::vector<std::uint64_t> acc;
  for (auto _ : s) kcal::sweep(state, gaussian, cfg, acc);
  s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * L));
}
BENCHMARK(BM_StretchSweep)->Arg(16)->Arg(64);

void BM_RngNormal(benchmark::State& s) {
  kcal::Rng r(3, 4, 5);
  for (auto _ : s) benchmark::DoNotOptimize(r.normal());
}
BENCHMARK(BM_RngNormal);

} // namespace
