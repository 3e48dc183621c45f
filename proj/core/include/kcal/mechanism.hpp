#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace kcal {

// CGS-mol unit system throughout: concentrations in mol/cm^3, pressure in
// dyn/cm^2, activation energies in cal/mol.
inline constexpr double kGasConstantCal = 1.9872036;          // cal/(mol K)
inline constexpr double kGasConstantCgs = 8.31446261815324e7; // erg/(mol K)
inline constexpr double kOneAtmosphere = 1.01325e6;           // dyn/cm^2

/// Structural problem with an otherwise well-formed mechanism
/// (element imbalance, unknown species, bad thermo ranges, ...).
class MechanismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the mechanism parser. Carries a 1-based source position.
class ParseError : public MechanismError {
 public:
  ParseError(const std::string& what, int line, int column);
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

class ThermoRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct NasaPoly7 {
  double t_low = 0.0;
  double t_mid = 0.0;
  double t_high = 0.0;
  std::array<double, 7> low{};
  std::array<double, 7> high{};

  bool operator==(const NasaPoly7&) const = default;
};

/// Dimensionless standard-state properties of one species.
struct ThermoValues {
  double cp_R = 0.0;
  double h_RT = 0.0;
  double s_R = 0.0;
};

/// NASA-7 evaluation with range check; throws ThermoRangeError when T is
/// outside [t_low, t_high].
ThermoValues thermo_props(const NasaPoly7& poly, double T);

/// Same polynomial evaluation without the range check (branch picked by
/// t_mid). Used inside integrators where Newton iterates can wander.
ThermoValues evaluate_nasa7(const NasaPoly7& poly, double T) noexcept;

struct Species {
  std::string name;
  double molar_mass = 0.0; // g/mol
  std::map<std::string, int> elements;
  std::string thermo_key;
  NasaPoly7 thermo;

  bool operator==(const Species&) const = default;
};

struct Arrhenius {
  double A = 0.0;    // CGS-mol units consistent with reaction order
  double beta = 0.0; // temperature exponent
  double Ea = 0.0;   // cal/mol

  bool operator==(const Arrhenius&) const = default;
};

using Efficiencies = std::map<std::string, double>;

struct Elementary {
  Arrhenius k;
  bool operator==(const Elementary&) const = default;
};

struct ThirdBody {
  Arrhenius k;
  Efficiencies efficiencies; // unlisted species have efficiency 1
  bool operator==(const ThirdBody&) const = default;
};

struct Falloff {
  Arrhenius k_high;
  Arrhenius k_low;
  double troe_fc = 1.0; // constant broadening center, (0, 1]
  Efficiencies efficiencies;
  bool operator==(const Falloff&) const = default;
};

using RateModel = std::variant<Elementary, ThirdBody, Falloff>;
using Stoichiometry = std::map<std::string, int>;

struct Reaction {
  std::string id;
  Stoichiometry reactants;
  Stoichiometry products;
  bool reversible = true;
  RateModel rate;
  // Additional Arrhenius sets sharing this stoichiometry (declared `dup`).
  // The forward rate constant is the sum over `rate` and every duplicate.
  std::vector<Arrhenius> duplicates;

  bool operator==(const Reaction&) const = default;

  /// Human-readable equation, e.g. "H + O2 (+M) = HO2 (+M)".
  std::string equation() const;
  /// Number of Arrhenius sets contributing to the forward rate.
  std::size_t arrhenius_count() const noexcept { return 1 + duplicates.size(); }
  /// Mutable access to the i-th Arrhenius set (0 = primary; for falloff
  /// reactions the primary is the high-pressure limit).
  Arrhenius& arrhenius(std::size_t i);
  const Arrhenius& arrhenius(std::size_t i) const;
  /// Third-body efficiency table, or nullptr for elementary reactions.
  Efficiencies* efficiencies() noexcept;
  const Efficiencies* efficiencies() const noexcept;
};

struct Mechanism {
  std::vector<Species> species;
  std::vector<Reaction> reactions;
  std::optional<std::string> default_bath;

  bool operator==(const Mechanism&) const = default;

  std::optional<std::size_t> species_index(std::string_view name) const;
  std::optional<std::size_t> reaction_index(std::string_view id) const;
  const Reaction& reaction(std::string_view id) const;
  Reaction& reaction(std::string_view id);

  /// Temperature interval in which every species' thermo is valid.
  std::pair<double, double> thermo_range() const;
};

/// Standard atomic mass in g/mol; throws MechanismError for unknown symbols.
double atomic_mass(std::string_view element);

/// Parses the line-oriented mechanism format. See data/h2_baseline.mech for
/// the grammar in practice.
Mechanism parse_mechanism(std::string_view text);
Mechanism load_mechanism(const std::string& path);

/// Writes `mech` back to the same format with 17 significant digits, so
/// parse_mechanism(serialize_mechanism(m)) == m.
std::string serialize_mechanism(const Mechanism& mech);

/// Runs every structural check that parse_mechanism applies.
void validate_mechanism(const Mechanism& mech);

struct ElementMatrix {
  std::vector<std::string> elements; // sorted
  std::size_t n_species = 0;
  std::vector<int> counts; // row-major, elements x species

  int operator()(std::size_t element, std::size_t species) const {
    return counts[element * n_species + species];
  }
};

ElementMatrix element_matrix(const Mechanism& mech);

/// Net stoichiometric coefficients (products minus reactants) per species.
std::vector<int> net_stoichiometry(const Mechanism& mech, const Reaction& r);

} // namespace kcal
