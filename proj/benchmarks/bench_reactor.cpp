#include <benchmark/benchmark.h>

#include "kcal/reactor.hpp"

namespace {

const kcal::Mechanism& mech() {
  static const kcal::Mechanism m = kcal::load_mechanism(KCAL_DATA_DIR "/h2_baseline.mech");
  return m;
}

std::vector<double> state(std::size_t n) {
  const double Y[] = {0.02, 0.2, 1e-4, 1e-4, 1e-3, 1e-4, 1e-5, 0.05, 0.0, 0.01, 0.01};
  std::vector<double> y(n + 1, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += (y[i] = Y[i]);
  y[8] += 1.0 - sum;
  y[n] = 1500.0;
  return y;
}

void BM_ReactorRhs(benchmark::State& s) {
  const kcal::ReactorSystem sys(mech(), kcal::ReactorMode::constant_pressure, kcal::kOneAtmosphere);
  auto ws = sys.model().make_workspace();
  const auto y = state(mech().species.size());
  std::vector<double> f(y.size());
  for (auto _ : s) {
    sys.rhs(y, f, ws);
    benchmark::DoNotOptimize(f.data());
  }
}
BENCHMARK(BM_ReactorRhs);

void BM_ReactorJacobian(benchmark::State& s) {
  const kcal::ReactorSystem sys(mech(), kcal::ReactorMode::constant_pressure, kcal::kOneAtmosphere);
  auto ws = sys.model().make_workspace();
  const auto y = state(mech().species.size());
  std::vector<double> f(y.size());
  sys.rhs(y, f, ws);
  Eigen::MatrixXd J(y.size(), y.size());
  for (auto _ : s) {
    sys.jacobian(y, f, J, ws, 1e-2);
    benchmark::DoNotOptimize(J.data());
  }
}
BENCHMARK(BM_ReactorJacobian);

void BM_IgnitionDelay(benchmark::State& s) {
  kcal::ReactorCase rc;
  rc.mode = s.range(0) ? kcal::ReactorMode::constant_volume : kcal::ReactorMode::constant_pressure;
  rc.T0 = 1100.0;
  rc.p0 = 1.0;
  rc.X = {{"H2", 0.2958}, {"O2", 0.1479}, {"N2", 0.5563}};
  rc.t_end = 0.1;
  rc.observable = kcal::IgnitionThreshold{1500.0};
  const kcal::IntegratorConfig cfg;
  for (auto _ : s) benchmark::DoNotOptimize(kcal::measure(mech(), rc, cfg));
}
BENCHMARK(BM_IgnitionDelay)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace
