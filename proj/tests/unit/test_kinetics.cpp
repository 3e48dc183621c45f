#include <gtest/gtest.h>

#include <cmath>

#include "kcal/kinetics.hpp"
#include "test_support.hpp"

namespace kcal {
namespace {

const Mechanism& baseline() {
  static const Mechanism m = load_mechanism(test::data_path("h2_baseline.mech"));
  return m;
}

// Mixture used for the frozen reference values below.
GasState reference_state() {
  return GasState::from_mole_fractions(baseline(), 1000.0, kOneAtmosphere,
                                       {{"H2", 0.25}, {"O2", 0.12}, {"N2", 0.5}, {"H", 0.01}, {"O", 0.01},
                                        {"OH", 0.02}, {"HO2", 0.01}, {"H2O2", 0.01}, {"H2O", 0.06},
                                        {"Ar", 0.005}, {"He", 0.005}});
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

TEST(Kinetics, ArrheniusClosedForm) {
  const Arrhenius k{2.0e13, 0.5, 3000.0};
  const long double T = 1234.5L;
  const long double ref = 2.0e13L * std::sqrt(T) * std::exp(-3000.0L / (1.9872036L * T));
  EXPECT_LT(rel(arrhenius(k, 1234.5), static_cast<double>(ref)), 1e-14);
}

// Independent broadening factor in long double.
long double troe_F(long double fc, long double Pr) {
  const long double lfc = std::log10(fc);
  const long double c = -0.4L - 0.67L * lfc;
  const long double n = 0.75L - 1.27L * lfc;
  const long double x = std::log10(Pr) + c;
  const long double r = x / (n - 0.14L * x);
  return std::pow(10.0L, lfc / (1.0L + r * r));
}

TEST(Kinetics, TroeLimits) {
  const double kh = 3.0e12, kl = 5.0e18;
  for (double fc : {0.43, 0.5, 0.8}) {
    // Low pressure: kf -> k_low [M] F.
    const double M = 1e-40;
    const long double Pr0 = static_cast<long double>(kl) * M / kh;
    EXPECT_LT(rel(troe_falloff(kh, kl, fc, M), static_cast<double>(kl * static_cast<long double>(M) * troe_F(fc, Pr0))),
              1e-10);
    // High pressure: kf -> k_high F.
    const double Mh = 1e30;
    const long double Prh = static_cast<long double>(kl) * Mh / kh;
    EXPECT_LT(rel(troe_falloff(kh, kl, fc, Mh), static_cast<double>(kh * troe_F(fc, Prh))), 1e-10);
  }
  for (double M : {1e-8, 1e-6, 1e-4}) {
    const double Pr = kl * M / kh;
    EXPECT_LT(rel(troe_falloff(kh, kl, 1.0, M), kh * Pr / (1.0 + Pr)), 1e-14);
    EXPECT_EQ(troe_broadening(1.0, Pr), 1.0);
  }
  EXPECT_EQ(troe_falloff(kh, kl, 0.5, 0.0), 0.0);
}

TEST(Kinetics, TroeBroadeningAtCenter) {
  // log10 Pr + c = 0 gives F = fc.
  const double fc = 0.43;
  const double c = -0.4 - 0.67 * std::log10(fc);
  EXPECT_LT(rel(troe_broadening(fc, std::pow(10.0, -c)), fc), 1e-14);
}

// Reference values from an independent kinetics library at the state above
// (converted from kmol/m^3 units). Its gas constant differs in the 7th digit.
TEST(Kinetics, RatesOfProgressMatchFrozenReference) {
  const auto r = production_rates(baseline(), reference_state());
  const std::pair<const char*, double> q_ref[] = {
      {"R1", -0.34580681964360235},     {"R2", 0.04253184238327383},   {"R3", 0.9670799301688044},
      {"R4", 0.09509719384403017},      {"R5", -2.601069514185105e-4}, {"R5-Ar", -6.509218805078016e-7},
      {"R6", 7.14505194574894e-5},      {"R7", 1.7340731529388274e-3}, {"R8", -1.3676554264268802e-2},
      {"R8-H2O", -4.093934691909996e-3}, {"R9", 1.2861281592251697e-2}, {"R10", 0.1578363467429814},
      {"R11", 0.9062872144346732},      {"R12", 0.6092861896209381},   {"R13", 1.1023253375231927},
      {"R14", 1.9395415688957286e-2},   {"R15", -7.335125848680843e-3}, {"R16", 4.854632901585599e-2},
      {"R17", 1.3079470030699166e-2},   {"R18a", 1.9233885048846446e-2}, {"R18b", 0.10214455912290181},
      {"X1", 4.206407599518369e-2},     {"X6", 5.522271633782261e-3},
  };
  for (const auto& [id, q] : q_ref) {
    EXPECT_LT(rel(r.q[*baseline().reaction_index(id)], q), 2e-4) << id;
  }
  const double wdot_ref[] = {-0.8384345469832181, 2.221860362082877,  0.15471649468455868, -0.8870968805550814,
                             -0.21160729834268562, -2.703748528266402, -0.15627370168066528, 2.375027914626148};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_LT(rel(r.wdot[i], wdot_ref[i]), 2e-4) << baseline().species[i].name;
  for (std::size_t i = 8; i < 11; ++i) EXPECT_EQ(r.wdot[i], 0.0);
}

TEST(Kinetics, EquilibriumConstantsMatchFrozenReference) {
  const auto& m = baseline();
  EXPECT_LT(rel(equilibrium_constant(m, m.reaction("R1"), 1000.0), 0.003979362891604519), 1e-6);
  EXPECT_LT(rel(equilibrium_constant(m, m.reaction("R9"), 1000.0), 36832503.593111195 * 1e3), 1e-6);
  EXPECT_LT(rel(equilibrium_constant(m, m.reaction("R15"), 1000.0), 1.2396352950504192e-06 * 1e-3), 1e-6);
  EXPECT_LT(rel(equilibrium_constant(m, m.reaction("X1"), 1000.0), 778199381846.6853), 1e-6);
}

TEST(Kinetics, ReverseOverForwardIsInverseKc) {
  const auto& m = baseline();
  const auto r = production_rates(m, reference_state());
  for (std::size_t j = 0; j < m.reactions.size(); ++j) {
    const double kc = equilibrium_constant(m, m.reactions[j], 1000.0);
    EXPECT_LT(rel(r.kr[j], r.kf[j] / kc), 1e-13) << m.reactions[j].id;
  }
}

TEST(Kinetics, MassIsConserved) {
  const auto& m = baseline();
  const auto r = production_rates(m, reference_state());
  double sum = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < m.species.size(); ++i) {
    sum += r.wdot[i] * m.species[i].molar_mass;
    scale += std::abs(r.wdot[i] * m.species[i].molar_mass);
  }
  EXPECT_LT(std::abs(sum), 1e-14 * scale);
}

TEST(Kinetics, ZeroConcentrationsGiveZeroRates) {
  GasState s;
  s.T = 1200.0;
  s.conc.assign(baseline().species.size(), 0.0);
  const auto r = production_rates(baseline(), s);
  for (double q : r.q) EXPECT_EQ(q, 0.0);
  for (double w : r.wdot) EXPECT_EQ(w, 0.0);
  EXPECT_FALSE(r.clipped);
}

TEST(Kinetics, NegativeConcentrationsAreClipped) {
  auto s = reference_state();
  auto clipped = s;
  s.conc[*baseline().species_index("HO2")] = -1e-12;
  clipped.conc[*baseline().species_index("HO2")] = 0.0;
  const auto a = production_rates(baseline(), s);
  const auto b = production_rates(baseline(), clipped);
  EXPECT_TRUE(a.clipped);
  EXPECT_FALSE(b.clipped);
  EXPECT_EQ(a.q, b.q);
}

TEST(Kinetics, CompiledModelMatchesReferenceEvaluator) {
  const auto& m = baseline();
  const KineticsModel model(m);
  auto ws = model.make_workspace();
  const auto s = reference_state();
  model.update_temperature(s.T, ws);
  std::vector<double> wdot(m.species.size());
  model.production_rates(ws, s.conc, wdot);
  const auto r = production_rates(m, s);
  for (std::size_t i = 0; i < wdot.size(); ++i) {
    EXPECT_NEAR(wdot[i], r.wdot[i], 1e-12 * std::abs(r.wdot[i]) + 1e-300) << m.species[i].name;
  }
}

TEST(Kinetics, EquilibriumOutsideThermoRangeThrows) {
  const auto& m = baseline();
  EXPECT_THROW(equilibrium_constant(m, m.reaction("R1"), 100.0), ThermoRangeError);
}

TEST(Kinetics, UnknownSpeciesInCompositionThrows) {
  EXPECT_THROW(GasState::from_mole_fractions(baseline(), 1000.0, kOneAtmosphere, {{"CH4", 1.0}}), MechanismError);
}

} // namespace
} // namespace kcal
