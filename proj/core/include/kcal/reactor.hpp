#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "kcal/bdf.hpp"
#include "kcal/kinetics.hpp"
#include "kcal/mechanism.hpp"

namespace kcal {

enum class ReactorMode { constant_pressure, constant_volume };

/// First time T reaches t_ign.
struct IgnitionThreshold {
  double t_ign = 0.0; // K
  bool operator==(const IgnitionThreshold&) const = default;
};

/// Time of the maximum heat-release rate dT/dt.
struct MaxHeatingRate {
  bool operator==(const MaxHeatingRate&) const = default;
};

/// First time the fuel mass fraction falls to `fraction` of its initial value.
struct FuelFraction {
  std::string species;
  double fraction = 0.5;
  bool operator==(const FuelFraction&) const = default;
};

/// A state quantity at a fixed time. quantity is "T", "p" (atm), "X:<sp>" or "Y:<sp>".
struct StateAtTime {
  double time = 0.0;
  std::string quantity;
  bool operator==(const StateAtTime&) const = default;
};

using ObservableSpec = std::variant<IgnitionThreshold, MaxHeatingRate, FuelFraction, StateAtTime>;

std::string describe(const ObservableSpec& spec);

struct ReactorCase {
  ReactorMode mode = ReactorMode::constant_pressure;
  double T0 = 0.0;                    // K
  double p0 = 1.0;                    // atm
  std::map<std::string, double> X;    // mole fractions, sum to 1
  double t_end = 0.0;                 // s
  ObservableSpec observable = IgnitionThreshold{};

  bool operator==(const ReactorCase&) const = default;
};

/// Checks the ReactorCase invariants (and that species exist in `mech`).
void validate_case(const Mechanism& mech, const ReactorCase& rc);

struct IntegratorConfig {
  double rtol = 1e-8;
  double atol = 1e-14;           // mass fractions
  double atol_T_rel = 1e-8;      // temperature tolerance as a fraction of T0
  std::size_t max_steps = 200000;
  double initial_dt = 0.0;       // 0 = automatic
  double event_rtol = 1e-8;      // bisection stops when the bracket is this fraction of t
  int max_bisections = 60;

  bool operator==(const IntegratorConfig&) const = default;
};

void validate_config(const IntegratorConfig& cfg);

enum class IntegrationStatus { success, step_failure, nonfinite, out_of_thermo_range };

const char* to_string(IntegrationStatus s) noexcept;

/// Stored states at every accepted integrator step.
struct ReactorTrajectory {
  ReactorMode mode = ReactorMode::constant_pressure;
  std::vector<std::string> species;
  std::vector<double> molar_masses;
  std::vector<double> times;               // s, strictly increasing
  std::vector<double> temperature;         // K
  std::vector<double> pressure;            // dyn/cm^2
  std::vector<double> dTdt;                // K/s
  std::vector<std::vector<double>> mass_fractions;
  double density = 0.0;                    // g/cm^3 (constant-volume only)
  IntegrationStatus status = IntegrationStatus::success;
  std::string message;
  BdfStats stats;

  bool ok() const noexcept { return status == IntegrationStatus::success; }
  std::size_t size() const noexcept { return times.size(); }
  /// Element moles per unit mass at stored point i, ordered like element_matrix.
  std::vector<double> element_moles(const Mechanism& mech, std::size_t i) const;
  /// Specific enthalpy (cp mode) or internal energy (cv mode), erg/g.
  double specific_energy(const Mechanism& mech, std::size_t i) const;
  std::vector<double> mole_fractions(std::size_t i) const;
};

enum class ObservableStatus { ok, no_event, failure };

const char* to_string(ObservableStatus s) noexcept;

struct ObservableResult {
  ObservableStatus status = ObservableStatus::failure;
  double value = 0.0;
  std::string message;

  bool ok() const noexcept { return status == ObservableStatus::ok; }
};

/// Integrates the adiabatic 0D reactor from the case's initial state to
/// t_end. Failures are reported through the trajectory status; the partial
/// trajectory is kept.
ReactorTrajectory integrate(const Mechanism& mech, const ReactorCase& rc, const IntegratorConfig& cfg);

/// Observable from stored points only, using linear interpolation between
/// them (argmax of stored dT/dt for MaxHeatingRate).
ObservableResult extract_observable(const ReactorTrajectory& traj, const ObservableSpec& spec);

/// Integrate + extract, with crossing events refined by bisection
/// re-integration across the bracketing step. Integration stops early once
/// a crossing event has been bracketed.
ObservableResult measure(const Mechanism& mech, const ReactorCase& rc, const IntegratorConfig& cfg);

/// Precompiled reactor right-hand side; exposed for oracles and benchmarks.
/// State vector is [Y_1 .. Y_n, T].
class ReactorSystem {
 public:
  ReactorSystem(const Mechanism& mech, ReactorMode mode, double pressure_or_density);

  std::size_t size() const noexcept { return model_.n_species() + 1; }
  const KineticsModel& model() const noexcept { return model_; }
  ReactorMode mode() const noexcept { return mode_; }

  void rhs(std::span<const double> y, std::span<double> ydot, KineticsModel::Workspace& ws) const;
  /// Finite-difference Jacobian that reuses temperature-dependent terms
  /// across the species columns.
  void jacobian(std::span<const double> y, std::span<const double> f, Eigen::Ref<Eigen::MatrixXd> J,
                KineticsModel::Workspace& ws, double t_threshold) const;
  double pressure(std::span<const double> y) const;

 private:
  void species_rates(std::span<const double> y, std::span<double> ydot, KineticsModel::Workspace& ws) const;

  KineticsModel model_;
  ReactorMode mode_;
  double p_ = 0.0;   // dyn/cm^2 for constant pressure
  double rho_ = 0.0; // g/cm^3 for constant volume
};

} // namespace kcal
