#include <gtest/gtest.h>

#include <cstdlib>

#include "kcal/kinetics.hpp"
#include "kcal/mechanism.hpp"
#include "table1.hpp"
#include "test_support.hpp"

namespace kcal {
namespace {

const Mechanism& baseline() {
  static const Mechanism m = load_mechanism(test::data_path("h2_baseline.mech"));
  return m;
}

double num(const char* s) { return std::strtod(s, nullptr); }

const Arrhenius& entry(const Mechanism& m, const char* id, int index) {
  const auto& r = m.reaction(id);
  if (index < 0) return std::get<Falloff>(r.rate).k_low;
  return r.arrhenius(static_cast<std::size_t>(index));
}

TEST(Mechanism, BaselineCounts) {
  const auto& m = baseline();
  EXPECT_EQ(m.species.size(), 11u);
  EXPECT_EQ(m.reactions.size(), 26u);
  EXPECT_EQ(m.default_bath, "N2");
  std::size_t sets = 0;
  for (const auto& r : m.reactions) sets += r.arrhenius_count();
  EXPECT_EQ(sets, 29u);
}

TEST(Mechanism, TableValuesBitExact) {
  const auto& m = baseline();
  for (const auto& row : test::kArrheniusRows) {
    SCOPED_TRACE(std::string(row.id) + " " + std::to_string(row.index));
    const auto& k = entry(m, row.id, row.index);
    EXPECT_EQ(k.A, num(row.A));
    EXPECT_EQ(k.beta, num(row.beta));
    EXPECT_EQ(k.Ea, num(row.Ea));
  }
  for (const auto& row : test::kEfficiencyRows) {
    SCOPED_TRACE(std::string(row.id) + " " + row.species);
    const auto* eff = m.reaction(row.id).efficiencies();
    ASSERT_NE(eff, nullptr);
    ASSERT_TRUE(eff->count(row.species));
    EXPECT_EQ(eff->at(row.species), num(row.value));
  }
  for (const auto& row : test::kTroeRows) {
    EXPECT_EQ(std::get<Falloff>(m.reaction(row.id).rate).troe_fc, num(row.fc));
  }
}

TEST(Mechanism, X6HasConstantRate) {
  const auto& k = baseline().reaction("X6").arrhenius(0);
  for (double T : {300.0, 1000.0, 2500.0}) EXPECT_EQ(arrhenius(k, T), 8.0e15);
}

TEST(Mechanism, SerializeRoundTrip) {
  const auto& m = baseline();
  const auto text = serialize_mechanism(m);
  EXPECT_EQ(parse_mechanism(text), m);
  EXPECT_EQ(serialize_mechanism(parse_mechanism(text)), text);
}

TEST(Mechanism, ReactionsConserveElements) {
  const auto& m = baseline();
  const auto em = element_matrix(m);
  for (const auto& r : m.reactions) {
    const auto nu = net_stoichiometry(m, r);
    for (std::size_t e = 0; e < em.elements.size(); ++e) {
      int sum = 0;
      for (std::size_t s = 0; s < m.species.size(); ++s) sum += em(e, s) * nu[s];
      EXPECT_EQ(sum, 0) << r.id << " " << em.elements[e];
    }
  }
}

TEST(Mechanism, ThermoRangeIsIntersection) {
  const auto [lo, hi] = baseline().thermo_range();
  EXPECT_EQ(lo, 300.0);
  EXPECT_EQ(hi, 3500.0);
}

TEST(Mechanism, NasaPolynomialMatchesFrozenValues) {
  // H2O at 1500 K: cp/R and h/RT from the GRI-Mech coefficients, evaluated
  // with an independent Horner scheme in extended precision.
  const auto& s = baseline().species[*baseline().species_index("H2O")];
  const auto& a = s.thermo.high;
  const long double T = 1500.0L;
  const long double cp = a[0] + T * (a[1] + T * (a[2] + T * (a[3] + T * a[4])));
  const long double h = a[0] + T * (a[1] / 2 + T * (a[2] / 3 + T * (a[3] / 4 + T * a[4] / 5))) + a[5] / T;
  const auto v = evaluate_nasa7(s.thermo, 1500.0);
  EXPECT_NEAR(v.cp_R, static_cast<double>(cp), 1e-13);
  EXPECT_NEAR(v.h_RT, static_cast<double>(h), 1e-13);
}

TEST(Mechanism, ThermoOutOfRangeThrows) {
  const auto& s = baseline().species[0];
  EXPECT_THROW(thermo_props(s.thermo, 100.0), ThermoRangeError);
  EXPECT_THROW(thermo_props(s.thermo, 4000.0), ThermoRangeError);
  EXPECT_NO_THROW(thermo_props(s.thermo, 1000.0));
}

const char* kSmall = R"(
[species]
H2 M=2.01588 elems=H:2 thermo=H2
H  M=1.00794 elems=H:1 thermo=H
[thermo]
H2 T=200,1000,3500 low=2.34433112,0.00798052075,-1.9478151e-05,2.01572094e-08,-7.37611761e-12,-917.935173,0.683010238 high=3.3372792,-4.94024731e-05,4.99456778e-07,-1.79566394e-10,2.00255376e-14,-950.158922,-3.20502331
H  T=200,1000,3500 low=2.5,0,0,0,0,25473.6599,-0.446682853 high=2.5,0,0,0,0,25473.6599,-0.446682853
[reactions]
D1: H2 + M = 2 H + M | A=4.577e19 beta=-1.40 Ea=104380 tb: H2:2.5
)";

TEST(Mechanism, ParsesSmallMechanism) {
  const auto m = parse_mechanism(kSmall);
  ASSERT_EQ(m.reactions.size(), 1u);
  const auto& tb = std::get<ThirdBody>(m.reactions[0].rate);
  EXPECT_EQ(tb.efficiencies.at("H2"), 2.5);
  EXPECT_EQ(m.reactions[0].equation(), "H2 + M = 2 H + M");
}

TEST(Mechanism, ParseErrorsCarryLine) {
  std::string bad = kSmall;
  bad.replace(bad.find("2 H + M"), 7, "2 H + Q + M");
  try {
    parse_mechanism(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 9);
    EXPECT_NE(std::string(e.what()).find("Q"), std::string::npos);
  }
}

TEST(Mechanism, RejectsElementImbalance) {
  std::string bad = kSmall;
  bad.replace(bad.find("2 H + M"), 7, "H + M");
  EXPECT_THROW(parse_mechanism(bad), ParseError);
}

TEST(Mechanism, RejectsDuplicateIdWithoutDup) {
  std::string bad = kSmall;
  bad += "D1: H2 + M = 2 H + M | A=1e10 beta=0 Ea=0\n";
  EXPECT_THROW(parse_mechanism(bad), ParseError);
}

TEST(Mechanism, RejectsMissingThermo) {
  std::string bad = kSmall;
  bad.replace(bad.find("thermo=H\n"), 9, "thermo=Hx\n");
  EXPECT_THROW(parse_mechanism(bad), ParseError);
}

TEST(Mechanism, RejectsNonPositiveA) {
  std::string bad = kSmall;
  bad.replace(bad.find("A=4.577e19"), 10, "A=-1");
  EXPECT_THROW(parse_mechanism(bad), MechanismError);
}

TEST(Mechanism, UnknownReactionLookupThrows) {
  EXPECT_THROW(baseline().reaction("R99"), MechanismError);
  EXPECT_FALSE(baseline().reaction_index("R99"));
}

} // namespace
} // namespace kcal
