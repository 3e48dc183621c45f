#include <benchmark/benchmark.h>

#include "kcal/kinetics.hpp"

namespace {

const kcal::Mechanism& mech() {
  static const kcal::Mechanism m = kcal::load_mechanism(KCAL_DATA_DIR "/h2_baseline.mech");
  return m;
}

kcal::GasState state() {
  return kcal::GasState::from_mole_fractions(mech(), 1500.0, kcal::kOneAtmosphere,
                                             {{"H2", 0.25}, {"O2", 0.12}, {"N2", 0.55}, {"H", 0.01},
                                              {"O", 0.01}, {"OH", 0.02}, {"HO2", 0.01}, {"H2O", 0.03}});
}

void BM_ProductionRatesReference(benchmark::State& s) {
  const auto st = state();
  for (auto _ : s) benchmark::DoNotOptimize(kcal::production_rates(mech(), st));
}
BENCHMARK(BM_ProductionRatesReference);

void BM_CompiledUpdateTemperature(benchmark::State& s) {
  const kcal::KineticsModel model(mech());
  auto ws = model.make_workspace();
  double T = 1500.0;
  for (auto _ : s) {
    model.update_temperature(T, ws);
    T = T == 1500.0 ? 1500.5 : 1500.0;
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_CompiledUpdateTemperature);

void BM_CompiledProductionRates(benchmark::State& s) {
  const kcal::KineticsModel model(mech());
  auto ws = model.make_workspace();
  const auto st = state();
  model.update_temperature(st.T, ws);
  std::vector<double> wdot(st.conc.size());
  for (auto _ : s) {
    model.production_rates(ws, st.conc, wdot);
    benchmark::DoNotOptimize(wdot.data());
  }
}
BENCHMARK(BM_CompiledProductionRates);

} // namespace
