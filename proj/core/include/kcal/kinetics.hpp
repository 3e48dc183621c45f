#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kcal/mechanism.hpp"

namespace kcal {

/// Thermodynamic state of an ideal-gas mixture, indexed like Mechanism::species.
struct GasState {
  double T = 0.0;             // K
  std::vector<double> conc;   // mol/cm^3

  double total_concentration() const;
  double pressure() const; // dyn/cm^2, ideal gas

  /// Concentrations from temperature, pressure (dyn/cm^2) and mole fractions.
  /// Mole fractions are normalized; unknown species throw MechanismError.
  static GasState from_mole_fractions(const Mechanism& mech, double T, double pressure,
                                      const std::map<std::string, double>& X);
};

struct RateEvaluation {
  std::vector<double> kf;   // forward rate constant per reaction (falloff-blended)
  std::vector<double> kr;   // reverse rate constant per reaction
  std::vector<double> q;    // net rate of progress, mol/(cm^3 s)
  std::vector<double> wdot; // net production per species, mol/(cm^3 s)
  bool clipped = false;     // a negative concentration was clipped to zero
};

/// kf = A T^beta exp(-Ea / (R T)) with R in cal/(mol K).
double arrhenius(const Arrhenius& k, double T);

/// Effective collider concentration: sum_i eff_i c_i, eff_i = 1 if unlisted.
double third_body_conc(const Mechanism& mech, const GasState& state, const Efficiencies& eff);

/// Troe blending with a constant broadening center fc:
///   Pr = k_low M / k_high
///   kf = k_high Pr / (1 + Pr) F,
///   log10 F = log10 fc / (1 + ((log10 Pr + c) / (n - 0.14 (log10 Pr + c)))^2)
/// with c = -0.4 - 0.67 log10 fc, n = 0.75 - 1.27 log10 fc. Pr = 0 gives 0.
double troe_falloff(double k_high, double k_low, double fc, double M_eff);

/// Broadening factor F of troe_falloff at a given reduced pressure.
double troe_broadening(double fc, double Pr);

/// Concentration-based equilibrium constant. Throws ThermoRangeError if T is
/// outside any participating species' thermo range.
double equilibrium_constant(const Mechanism& mech, const Reaction& r, double T);

/// Mass-action rates for every reaction and net species production rates.
/// Negative concentrations are clipped to zero and reported.
RateEvaluation production_rates(const Mechanism& mech, const GasState& state);

/// Index-based evaluator compiled once from a Mechanism. The
/// temperature-dependent part (thermo, rate constants, equilibrium constants)
/// is separated from the composition-dependent part so that Jacobian columns
/// for species perturbations reuse it. Immutable after construction.
class KineticsModel {
 public:
  explicit KineticsModel(const Mechanism& mech);

  /// Per-call scratch space; one per thread.
  struct Workspace {
    double T = 0.0;
    std::vector<double> cp_R, h_RT, g_RT; // per species
    std::vector<double> k_fwd;            // per reaction; k_high for falloff
    std::vector<double> k_low;            // per reaction; only falloff entries used
    std::vector<double> inv_kc;           // per reaction; 0 for irreversible
    std::vector<double> q;                // per reaction, last evaluation
  };

  Workspace make_workspace() const;

  std::size_t n_species() const noexcept { return molar_mass_.size(); }
  std::size_t n_reactions() const noexcept { return reactions_.size(); }
  std::span<const double> molar_masses() const noexcept { return molar_mass_; }
  const std::vector<std::vector<int>>& element_counts() const noexcept { return elements_; }

  void update_temperature(double T, Workspace& ws) const;

  /// Fills wdot (mol/(cm^3 s)) from concentrations at ws.T. Returns true when a
  /// negative concentration had to be clipped.
  bool production_rates(Workspace& ws, std::span<const double> conc, std::span<double> wdot) const;

 private:
  enum class Kind { elementary, third_body, falloff };
  struct Term {
    std::size_t species;
    int nu;
  };
  struct CompiledReaction {
    Kind kind;
    std::vector<Term> reactants;
    std::vector<Term> products;
    std::vector<Arrhenius> forward; // summed; [0] is k_high for falloff
    Arrhenius low;
    double fc = 1.0;
    std::vector<double> efficiency; // dense, per species
    bool reversible = true;
    int delta_nu = 0;
  };

  std::vector<NasaPoly7> thermo_;
  std::vector<double> molar_mass_;
  std::vector<std::vector<int>> elements_; // element x species
  std::vector<CompiledReaction> reactions_;
};

} // namespace kcal
